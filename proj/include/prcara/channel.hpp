#pragma once

#include <span>
#include <variant>

#include "prcara/units.hpp"

namespace prcara {

/// gain = constant * d^-exponent
struct PowerLaw {
  double constant = 1.0;
  double exponent = 2.0;
};

/// Winner+ B1 line-of-sight, below breakpoint:
/// PL_dB = 22.7 log10(d) + 41.0 + 20 log10(f_c / 5.0)
struct WinnerB1Los {
  double carrier_ghz = 5.9;
};

using PathlossModel = std::variant<PowerLaw, WinnerB1Los>;

enum class FastFading { None, RayleighUnitMean };

struct ChannelParams {
  PathlossModel pathloss = WinnerB1Los{};
  double shadowing_sigma_db = 3.0;
  FastFading fast_fading = FastFading::RayleighUnitMean;

  void validate() const;
};

struct LinkBudget {
  double tx_power_dbm = 23.0;
  double tx_gain_dbi = 3.0;
  double rx_gain_dbi = 3.0;
  double noise_figure_db = 9.0;
  double bandwidth_hz = 20e6;

  void validate() const;
  /// EIRP plus receive antenna gain, in mW.
  double effective_tx_mw() const { return dbm_to_mw(tx_power_dbm + tx_gain_dbi + rx_gain_dbi); }
};

/// Pathloss in dB (positive). Throws DomainError for distance_m <= 0.
double pathloss_db(double distance_m, const ChannelParams& params);

/// Linear distance-dependent power gain, before shadowing and fading.
double pathloss_gain(double distance_m, const ChannelParams& params);

/// Both models are constant * d^-exponent; the Winner+ B1 form is folded into
/// that shape for fast evaluation.
PowerLaw equivalent_power_law(const ChannelParams& params);

/// h = g * xi * alpha, with xi log-normal (median 1, sigma in dB) and g the
/// unit-mean fast-fading power. Draws from `rng` only for enabled terms.
double sample_channel_gain(Rng& rng, double distance_m, const ChannelParams& params);

/// Thermal noise over the link bandwidth: -174 + 10 log10(B) + NF.
double noise_power_dbm(const LinkBudget& budget);

/// signal / (noise + sum(interferers)), all in mW.
double sinr_linear(double signal_mw, std::span<const double> interferer_mw, double noise_mw);

}  // namespace prcara
