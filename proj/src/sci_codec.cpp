#include "prcara/sci_codec.hpp"

#include <array>
#include <sstream>
#include <string_view>

#include "prcara/error.hpp"

namespace prcara {
namespace {

struct FieldSpec {
  std::string_view name;
  int shift;
  int width;
};

constexpr std::array<FieldSpec, 6> kFields{{
    {"priority", 29, 3},
    {"ri1", 24, 5},
    {"ri2", 17, 7},
    {"rri_code", 13, 4},
    {"mcs", 8, 5},
    {"dmrs_and_misc", 0, 8},
}};

std::array<std::uint8_t, 6> values_of(const ExtendedSci& sci) {
  return {sci.priority, sci.ri1, sci.ri2, sci.rri_code, sci.mcs, sci.dmrs_and_misc};
}

}  // namespace

std::uint32_t encode_sci(const ExtendedSci& sci) {
  const auto values = values_of(sci);
  std::uint32_t word = 0;
  for (std::size_t i = 0; i < kFields.size(); ++i) {
    const auto& field = kFields[i];
    const std::uint32_t limit = (1u << field.width) - 1u;
    if (values[i] > limit) {
      throw EncodeError(std::string(field.name), "sci field " + std::string(field.name) + "=" +
                                                     std::to_string(values[i]) + " exceeds " +
                                                     std::to_string(limit));
    }
    word |= static_cast<std::uint32_t>(values[i]) << field.shift;
  }
  return word;
}

ExtendedSci decode_sci(std::uint32_t word) {
  auto field = [word](std::size_t i) {
    const auto& f = kFields[i];
    return static_cast<std::uint8_t>((word >> f.shift) & ((1u << f.width) - 1u));
  };
  return ExtendedSci{field(0), field(1), field(2), field(3), field(4), field(5)};
}

void validate_sci(const ExtendedSci& sci, int num_subchannels) {
  (void)encode_sci(sci);
  if (sci.ri2 != 0 && sci.ri1 >= num_subchannels) {
    throw EncodeError("ri1", "sci field ri1=" + std::to_string(sci.ri1) + " outside " +
                                 std::to_string(num_subchannels) + " subchannels");
  }
}

std::optional<ResourceIndex> reservation_of(const ExtendedSci& sci, std::int64_t current_subframe) {
  if (sci.ri2 == 0) return std::nullopt;
  return ResourceIndex{sci.ri1, current_subframe + sci.ri2};
}

ExtendedSci sci_for_reservation(std::optional<ResourceIndex> next, std::int64_t current_subframe,
                                std::uint8_t mcs) {
  ExtendedSci sci;
  sci.mcs = mcs;
  if (next) {
    const auto offset = next->subframe - current_subframe;
    if (offset >= 1 && offset <= kRi2Max && next->subchannel >= 0 && next->subchannel < 32) {
      sci.ri1 = static_cast<std::uint8_t>(next->subchannel);
      sci.ri2 = static_cast<std::uint8_t>(offset);
    }
  }
  return sci;
}

std::uint8_t rri_code_for_ms(int rri_ms) {
  if (rri_ms == 20) return 12;
  if (rri_ms == 50) return 11;
  if (rri_ms >= 100 && rri_ms <= 1000 && rri_ms % 100 == 0) return static_cast<std::uint8_t>(rri_ms / 100);
  throw DomainError("no rri code for " + std::to_string(rri_ms) + " ms");
}

int rri_ms_from_code(std::uint8_t code) {
  if (code >= 1 && code <= 10) return 100 * code;
  if (code == 11) return 50;
  if (code == 12) return 20;
  return 0;
}

std::string to_debug_string(const ExtendedSci& sci) {
  const auto values = values_of(sci);
  std::ostringstream out;
  for (std::size_t i = 0; i < kFields.size(); ++i) {
    if (i) out << ' ';
    out << kFields[i].name << '=' << static_cast<unsigned>(values[i]);
  }
  return out.str();
}

ExtendedSci parse_debug_string(const std::string& text) {
  std::array<int, 6> values{};
  std::array<bool, 6> seen{};
  std::istringstream in(text);
  std::string token;
  while (in >> token) {
    const auto eq = token.find('=');
    if (eq == std::string::npos) throw FormatError("sci dump: expected field=value, got '" + token + "'");
    const std::string_view name(token.data(), eq);
    std::size_t i = 0;
    while (i < kFields.size() && kFields[i].name != name) ++i;
    if (i == kFields.size()) throw FormatError("sci dump: unknown field '" + std::string(name) + "'");
    try {
      values[i] = std::stoi(token.substr(eq + 1));
    } catch (const std::exception&) {
      throw FormatError("sci dump: bad value in '" + token + "'");
    }
    if (values[i] < 0 || values[i] > 255) throw FormatError("sci dump: value out of range in '" + token + "'");
    seen[i] = true;
  }
  for (std::size_t i = 0; i < kFields.size(); ++i) {
    if (!seen[i]) throw FormatError("sci dump: missing field " + std::string(kFields[i].name));
  }
  ExtendedSci sci{static_cast<std::uint8_t>(values[0]), static_cast<std::uint8_t>(values[1]),
                  static_cast<std::uint8_t>(values[2]), static_cast<std::uint8_t>(values[3]),
                  static_cast<std::uint8_t>(values[4]), static_cast<std::uint8_t>(values[5])};
  (void)encode_sci(sci);
  return sci;
}

}  // namespace prcara
