#include "prcara/channel.hpp"

#include <cmath>
#include <string>

#include "prcara/error.hpp"

namespace prcara {

void ChannelParams::validate() const {
  if (const auto* law = std::get_if<PowerLaw>(&pathloss)) {
    if (!(law->exponent > 0.0)) throw ConfigError("channel: pathloss exponent must be > 0");
    if (!(law->constant > 0.0)) throw ConfigError("channel: pathloss constant must be > 0");
  } else if (const auto* winner = std::get_if<WinnerB1Los>(&pathloss)) {
    if (!(winner->carrier_ghz > 0.0)) throw ConfigError("channel: carrier_ghz must be > 0");
  }
  if (!(shadowing_sigma_db >= 0.0)) throw ConfigError("channel: shadowing_sigma_db must be >= 0");
}

void LinkBudget::validate() const {
  if (!(bandwidth_hz > 0.0)) throw ConfigError("link budget: bandwidth_hz must be > 0");
}

double pathloss_db(double distance_m, const ChannelParams& params) {
  if (!(distance_m > 0.0)) throw DomainError("pathloss: distance must be > 0, got " + std::to_string(distance_m));
  if (const auto* law = std::get_if<PowerLaw>(&params.pathloss)) {
    return -10.0 * std::log10(law->constant) + 10.0 * law->exponent * std::log10(distance_m);
  }
  const auto& winner = std::get<WinnerB1Los>(params.pathloss);
  return 22.7 * std::log10(distance_m) + 41.0 + 20.0 * std::log10(winner.carrier_ghz / 5.0);
}

double pathloss_gain(double distance_m, const ChannelParams& params) {
  if (const auto* law = std::get_if<PowerLaw>(&params.pathloss)) {
    if (!(distance_m > 0.0)) throw DomainError("pathloss: distance must be > 0, got " + std::to_string(distance_m));
    return law->constant * std::pow(distance_m, -law->exponent);
  }
  return db_to_linear(-pathloss_db(distance_m, params));
}

PowerLaw equivalent_power_law(const ChannelParams& params) {
  if (const auto* law = std::get_if<PowerLaw>(&params.pathloss)) return *law;
  const auto& winner = std::get<WinnerB1Los>(params.pathloss);
  return {db_to_linear(-(41.0 + 20.0 * std::log10(winner.carrier_ghz / 5.0))), 2.27};
}

double sample_channel_gain(Rng& rng, double distance_m, const ChannelParams& params) {
  double gain = pathloss_gain(distance_m, params);
  if (params.shadowing_sigma_db > 0.0) {
    std::normal_distribution<double> shadow(0.0, params.shadowing_sigma_db);
    gain *= db_to_linear(shadow(rng));
  }
  if (params.fast_fading == FastFading::RayleighUnitMean) {
    std::exponential_distribution<double> fading(1.0);
    gain *= fading(rng);
  }
  return gain;
}

double noise_power_dbm(const LinkBudget& budget) {
  return -174.0 + 10.0 * std::log10(budget.bandwidth_hz) + budget.noise_figure_db;
}

double sinr_linear(double signal_mw, std::span<const double> interferer_mw, double noise_mw) {
  double denominator = noise_mw;
  for (double p : interferer_mw) denominator += p;
  return signal_mw / denominator;
}

}  // namespace prcara
