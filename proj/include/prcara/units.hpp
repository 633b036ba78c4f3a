#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace prcara {

using Rng = std::mt19937_64;

enum class VehicleId : std::uint32_t {};

constexpr std::uint32_t to_index(VehicleId id) noexcept { return static_cast<std::uint32_t>(id); }

inline double db_to_linear(double db) { return std::pow(10.0, db / 10.0); }
inline double linear_to_db(double linear) { return 10.0 * std::log10(linear); }

// dBm <-> mW are the same maps; kept separate for readability at call sites.
inline double dbm_to_mw(double dbm) { return db_to_linear(dbm); }
inline double mw_to_dbm(double mw) { return linear_to_db(mw); }

}  // namespace prcara
