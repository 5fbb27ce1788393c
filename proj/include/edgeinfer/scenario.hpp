#pragma once

#include <complex>
#include <vector>

#include <Eigen/Dense>

#include "edgeinfer/rng.hpp"

namespace edgeinfer::scenario {

using Eigen::MatrixXcd;
using Eigen::VectorXcd;
using Eigen::VectorXd;
using cd = std::complex<double>;

// Which devices store which dataset files.
struct Placement {
  int num_devices = 0;
  int num_files = 0;
  int files_per_device = 0;
  std::vector<std::vector<int>> stores;  // per device, sorted file indices
};

enum class ChannelKind { kIid, kIrsComposite };

// Device-to-device effective coefficients h[k][j] of the shuffling channel
// (the relay hop is folded in). Diagonal entries exist but are never
// constrained: a device cancels its own echoed transmission.
struct InterferenceChannel {
  MatrixXcd coeffs;
  ChannelKind kind = ChannelKind::kIid;
};

// IRS cascade gains. In-edge scenarios use ap_to_irs/irs_to_user; shuffling
// scenarios use the folded per-device-pair cascade reflect_coeff.
struct IrsLinkSet {
  int num_elements = 0;
  std::vector<MatrixXcd> ap_to_irs;                 // per AP, M x L
  std::vector<VectorXcd> irs_to_user;               // per user, length M
  std::vector<std::vector<VectorXcd>> reflect_coeff;  // [k][j], length M
};

// Unit-modulus reflection coefficients v_m = exp(i theta_m).
struct PhaseVector {
  VectorXcd v;
};

struct Point {
  double x = 0.0;
  double y = 0.0;
};

struct EdgeScenario {
  int num_aps = 0;
  int antennas_per_ap = 0;
  int num_users = 0;
  std::vector<Point> ap_pos;
  std::vector<Point> user_pos;
  Point irs_pos;
  std::vector<std::vector<VectorXcd>> h;  // h[n][k], length L
  IrsLinkSet irs;
  double noise_power = 0.0;            // watts
  double per_ap_max_power = 0.0;       // watts
  double per_task_compute_power = 0.0; // watts
  VectorXd sinr_targets;               // linear ratios, one per user
};

struct GeometryConfig {
  int num_aps = 3;
  int antennas_per_ap = 5;
  int num_users = 10;
  int irs_elements = 0;
  double area_side = 200.0;            // meters
  double noise_power = 1e-13;          // watts (-100 dBm)
  double per_ap_max_power = 1.0;       // watts
  double per_task_compute_power = 0.45;  // watts
  double sinr_target_db = 10.0;        // common target for all users
};

// Link gains (linear power ratios) of the geometric model, including the
// 10 dB antenna gain on AP-user and AP-IRS links. Distances clamp at 1 m.
double direct_link_gain(double d_m);
double ap_irs_link_gain(double d_m);
double irs_user_link_gain(double d_m);

// Deterministic cyclic placement: device i stores {(F*i + t) mod N_f}.
Placement gen_uniform_placement(int K, int N_f, int F);

// i.i.d. CN(0,1) device-to-device coefficients.
InterferenceChannel gen_iid_channel(int K, Rng& rng);

// Folded IRS cascade for the shuffling channel: a[k][j] i.i.d. CN(0, beta)
// per element, beta = 0.5; the diagonal is zero (never constrained).
std::vector<std::vector<VectorXcd>> gen_shuffle_cascade(int K, int M, Rng& rng);

// Geometric in-edge layout: APs at fixed positions, IRS at the center,
// users uniform in the square, channels sqrt(gain) x CN(0,1) small-scale.
EdgeScenario gen_geometric_scenario(const GeometryConfig& cfg, Rng& rng);

// Effective channels under phase vector v.
// In-edge form: h_eff = direct + ap_to_irs^H diag(v)^H irs_to_user.
VectorXcd compose_irs_channel(const VectorXcd& direct, const MatrixXcd& ap_to_irs,
                              const VectorXcd& irs_to_user, const PhaseVector& v);
// Shuffling form: h_eff = direct + <conj(v), cascade>.
cd compose_irs_channel(cd direct, const VectorXcd& cascade, const PhaseVector& v);
// Whole-matrix shuffling composite.
InterferenceChannel compose_irs_channel(const InterferenceChannel& direct,
                                        const std::vector<std::vector<VectorXcd>>& cascade,
                                        const PhaseVector& v);
// All in-edge composites of a scenario: result[n][k] has length L.
std::vector<std::vector<VectorXcd>> compose_all_irs(const EdgeScenario& sc,
                                                    const PhaseVector& v);

}  // namespace edgeinfer::scenario
