#include "edgeinfer/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace edgeinfer::scenario {

namespace {

constexpr double kAntennaGainDb = 10.0;
constexpr double kShuffleCascadeVar = 0.5;

double db_to_linear(double db) { return std::pow(10.0, db / 10.0); }

double dist(const Point& a, const Point& b) {
  return std::hypot(a.x - b.x, a.y - b.y);
}

void check_unit_modulus(const PhaseVector& v) {
  for (int m = 0; m < v.v.size(); ++m) {
    if (std::abs(std::abs(v.v[m]) - 1.0) > 1e-9)
      throw std::invalid_argument("scenario: phase entries must be unit modulus");
  }
}

}  // namespace

double direct_link_gain(double d_m) {
  const double d = std::max(d_m, 1.0);
  return db_to_linear(kAntennaGainDb - (32.6 + 36.7 * std::log10(d)));
}

double ap_irs_link_gain(double d_m) {
  const double d = std::max(d_m, 1.0);
  return db_to_linear(kAntennaGainDb - (30.0 + 22.0 * std::log10(d)));
}

double irs_user_link_gain(double d_m) {
  const double d = std::max(d_m, 1.0);
  return db_to_linear(-(30.0 + 22.0 * std::log10(d)));
}

Placement gen_uniform_placement(int K, int N_f, int F) {
  if (K < 1 || N_f < 1 || F < 1)
    throw std::invalid_argument("placement: counts must be positive");
  if (F > N_f)
    throw std::invalid_argument("placement: more files per device than files");
  if (static_cast<long>(K) * F < N_f)
    throw std::invalid_argument("placement: some files would not be stored");
  Placement p;
  p.num_devices = K;
  p.num_files = N_f;
  p.files_per_device = F;
  p.stores.resize(K);
  for (int i = 0; i < K; ++i) {
    for (int t = 0; t < F; ++t) p.stores[i].push_back((F * i + t) % N_f);
    std::sort(p.stores[i].begin(), p.stores[i].end());
    p.stores[i].erase(std::unique(p.stores[i].begin(), p.stores[i].end()),
                      p.stores[i].end());
    if (static_cast<int>(p.stores[i].size()) != F)
      throw std::invalid_argument("placement: cyclic rule repeats a file on one device");
  }
  return p;
}

InterferenceChannel gen_iid_channel(int K, Rng& rng) {
  if (K < 2) throw std::invalid_argument("channel: need at least two devices");
  InterferenceChannel ch;
  ch.kind = ChannelKind::kIid;
  ch.coeffs.resize(K, K);
  for (int k = 0; k < K; ++k)
    for (int j = 0; j < K; ++j) ch.coeffs(k, j) = rng.cgauss();
  return ch;
}

std::vector<std::vector<VectorXcd>> gen_shuffle_cascade(int K, int M, Rng& rng) {
  const double amp = std::sqrt(kShuffleCascadeVar);
  std::vector<std::vector<VectorXcd>> a(K, std::vector<VectorXcd>(K));
  for (int k = 0; k < K; ++k) {
    for (int j = 0; j < K; ++j) {
      a[k][j] = VectorXcd::Zero(M);
      if (j == k) continue;
      for (int m = 0; m < M; ++m) a[k][j][m] = amp * rng.cgauss();
    }
  }
  return a;
}

EdgeScenario gen_geometric_scenario(const GeometryConfig& cfg, Rng& rng) {
  if (cfg.num_aps < 1 || cfg.num_aps > 3)
    throw std::invalid_argument("scenario: supported AP counts are 1..3");
  if (cfg.antennas_per_ap < 1 || cfg.num_users < 1 || cfg.irs_elements < 0)
    throw std::invalid_argument("scenario: invalid dimensions");
  if (cfg.noise_power <= 0.0 || cfg.per_ap_max_power <= 0.0 ||
      cfg.per_task_compute_power < 0.0)
    throw std::invalid_argument("scenario: invalid power parameters");

  EdgeScenario sc;
  sc.num_aps = cfg.num_aps;
  sc.antennas_per_ap = cfg.antennas_per_ap;
  sc.num_users = cfg.num_users;
  const Point fixed_aps[3] = {{0.0, 0.0}, {cfg.area_side, 0.0},
                              {cfg.area_side / 2.0, cfg.area_side}};
  sc.ap_pos.assign(fixed_aps, fixed_aps + cfg.num_aps);
  sc.irs_pos = {cfg.area_side / 2.0, cfg.area_side / 2.0};
  sc.noise_power = cfg.noise_power;
  sc.per_ap_max_power = cfg.per_ap_max_power;
  sc.per_task_compute_power = cfg.per_task_compute_power;
  sc.sinr_targets =
      VectorXd::Constant(cfg.num_users, db_to_linear(cfg.sinr_target_db));

  // Draw order is part of the reproducibility contract: user positions,
  // then direct channels (by AP, then user), then AP-IRS links, then
  // IRS-user links.
  sc.user_pos.resize(cfg.num_users);
  for (int k = 0; k < cfg.num_users; ++k) {
    sc.user_pos[k].x = rng.uniform(0.0, cfg.area_side);
    sc.user_pos[k].y = rng.uniform(0.0, cfg.area_side);
  }

  const int L = cfg.antennas_per_ap;
  sc.h.assign(cfg.num_aps, std::vector<VectorXcd>(cfg.num_users));
  for (int n = 0; n < cfg.num_aps; ++n) {
    for (int k = 0; k < cfg.num_users; ++k) {
      const double amp = std::sqrt(direct_link_gain(dist(sc.ap_pos[n], sc.user_pos[k])));
      VectorXcd v(L);
      for (int l = 0; l < L; ++l) v[l] = amp * rng.cgauss();
      sc.h[n][k] = v;
    }
  }

  sc.irs.num_elements = cfg.irs_elements;
  const int M = cfg.irs_elements;
  if (M > 0) {
    sc.irs.ap_to_irs.resize(cfg.num_aps);
    for (int n = 0; n < cfg.num_aps; ++n) {
      const double amp = std::sqrt(ap_irs_link_gain(dist(sc.ap_pos[n], sc.irs_pos)));
      MatrixXcd F(M, L);
      for (int l = 0; l < L; ++l)
        for (int m = 0; m < M; ++m) F(m, l) = amp * rng.cgauss();
      sc.irs.ap_to_irs[n] = F;
    }
    sc.irs.irs_to_user.resize(cfg.num_users);
    for (int k = 0; k < cfg.num_users; ++k) {
      const double amp = std::sqrt(irs_user_link_gain(dist(sc.irs_pos, sc.user_pos[k])));
      VectorXcd g(M);
      for (int m = 0; m < M; ++m) g[m] = amp * rng.cgauss();
      sc.irs.irs_to_user[k] = g;
    }
  }
  return sc;
}

VectorXcd compose_irs_channel(const VectorXcd& direct, const MatrixXcd& ap_to_irs,
                              const VectorXcd& irs_to_user, const PhaseVector& v) {
  const int M = static_cast<int>(v.v.size());
  if (ap_to_irs.rows() != M || irs_to_user.size() != M ||
      ap_to_irs.cols() != direct.size())
    throw std::invalid_argument("compose: dimension mismatch");
  check_unit_modulus(v);
  return direct + ap_to_irs.adjoint() * v.v.conjugate().asDiagonal() * irs_to_user;
}

cd compose_irs_channel(cd direct, const VectorXcd& cascade, const PhaseVector& v) {
  if (cascade.size() != v.v.size())
    throw std::invalid_argument("compose: dimension mismatch");
  check_unit_modulus(v);
  cd acc = direct;
  for (int m = 0; m < cascade.size(); ++m) acc += std::conj(v.v[m]) * cascade[m];
  return acc;
}

InterferenceChannel compose_irs_channel(const InterferenceChannel& direct,
                                        const std::vector<std::vector<VectorXcd>>& cascade,
                                        const PhaseVector& v) {
  const int K = static_cast<int>(direct.coeffs.rows());
  if (static_cast<int>(cascade.size()) != K)
    throw std::invalid_argument("compose: cascade size mismatch");
  InterferenceChannel out;
  out.kind = ChannelKind::kIrsComposite;
  out.coeffs.resize(K, K);
  for (int k = 0; k < K; ++k) {
    if (static_cast<int>(cascade[k].size()) != K)
      throw std::invalid_argument("compose: cascade size mismatch");
    for (int j = 0; j < K; ++j)
      out.coeffs(k, j) = compose_irs_channel(direct.coeffs(k, j), cascade[k][j], v);
  }
  return out;
}

std::vector<std::vector<VectorXcd>> compose_all_irs(const EdgeScenario& sc,
                                                    const PhaseVector& v) {
  std::vector<std::vector<VectorXcd>> out(sc.num_aps,
                                          std::vector<VectorXcd>(sc.num_users));
  for (int n = 0; n < sc.num_aps; ++n)
    for (int k = 0; k < sc.num_users; ++k)
      out[n][k] = compose_irs_channel(sc.h[n][k], sc.irs.ap_to_irs[n],
                                      sc.irs.irs_to_user[k], v);
  return out;
}

}  // namespace edgeinfer::scenario
