#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "prcara/resource_grid.hpp"

namespace prcara {

/// 1-stage SCI with the reserved field repurposed to carry the resource of
/// the sender's next transmission.
///
/// Wire layout, MSB to LSB (32 bits):
///
///   31..29 priority       3 bits
///   28..24 ri1            5 bits  subchannel of the next transmission
///   23..17 ri2            7 bits  subframe offset to the next transmission, 0 = none
///   16..13 rri_code       4 bits
///   12..8  mcs            5 bits
///    7..0  dmrs_and_misc  8 bits  legacy fields, passed through
struct ExtendedSci {
  std::uint8_t priority = 0;
  std::uint8_t ri1 = 0;
  std::uint8_t ri2 = 0;
  std::uint8_t rri_code = 0;
  std::uint8_t mcs = 0;
  std::uint8_t dmrs_and_misc = 0;

  friend bool operator==(const ExtendedSci&, const ExtendedSci&) = default;
};

inline constexpr int kRi2Max = 127;

/// Throws EncodeError naming the first out-of-range field.
std::uint32_t encode_sci(const ExtendedSci& sci);

ExtendedSci decode_sci(std::uint32_t word);

/// Additionally checks ri1 < num_subchannels whenever a reservation is signalled.
void validate_sci(const ExtendedSci& sci, int num_subchannels);

/// The announced next resource, or nullopt when ri2 == 0.
std::optional<ResourceIndex> reservation_of(const ExtendedSci& sci, std::int64_t current_subframe);

/// Builds the SCI announcing `next` from a transmission at `current_subframe`.
/// A missing or out-of-range next resource yields ri1 = ri2 = 0.
ExtendedSci sci_for_reservation(std::optional<ResourceIndex> next, std::int64_t current_subframe,
                                std::uint8_t mcs = 3);

/// RRI field codes: 1..10 for k*100 ms, 11 for 50 ms, 12 for 20 ms; 0 = none.
/// Throws DomainError for periods without a code.
std::uint8_t rri_code_for_ms(int rri_ms);
/// 0 for code 0 or an unused code.
int rri_ms_from_code(std::uint8_t code);

/// `priority=0 ri1=3 ri2=20 rri_code=0 mcs=0 dmrs_and_misc=0`
std::string to_debug_string(const ExtendedSci& sci);
ExtendedSci parse_debug_string(const std::string& text);

}  // namespace prcara
