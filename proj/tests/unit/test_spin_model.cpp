#include <catch_amalgamated.hpp>

#include <cmath>
#include <numbers>
#include <random>

#include "nvtherm/spin_model.hpp"
#include "oracles.hpp"

using namespace nvtherm;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

Vec3 random_unit(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Vec3 v{n(rng), n(rng), n(rng)};
  return normalized(v);
}

SpinParams random_params(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> d(2.5e9, 3.2e9), e(0.0, 10e6), b(0.0, 10e-3);
  SpinParams p;
  p.D = d(rng);
  p.E = e(rng);
  p.B = random_unit(rng) * b(rng);
  return p;
}

// Rotation about a unit axis by angle t (Rodrigues).
Vec3 rotate(const Vec3& v, const Vec3& k, double t) {
  return v * std::cos(t) + cross(k, v) * std::sin(t) + k * (dot(k, v) * (1.0 - std::cos(t)));
}

double max_abs_eig(const Eigenvalues3& l) {
  return std::max({std::abs(l[0]), std::abs(l[1]), std::abs(l[2])});
}

}  // namespace

TEST_CASE("tetrahedral axes are unit, mutually at -1/3, and resolve the identity", "[spin_model]") {
  const auto axes = NVAxisSet::tetrahedral();
  double outer[3][3] = {};
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK_THAT(norm(axes[i]), WithinAbs(1.0, 1e-12));
    for (std::size_t j = i + 1; j < 4; ++j) CHECK_THAT(dot(axes[i], axes[j]), WithinAbs(-1.0 / 3.0, 1e-12));
    for (int a = 0; a < 3; ++a)
      for (int b = 0; b < 3; ++b) outer[a][b] += axes[i][a] * axes[i][b];
  }
  for (int a = 0; a < 3; ++a)
    for (int b = 0; b < 3; ++b) CHECK_THAT(outer[a][b], WithinAbs(a == b ? 4.0 / 3.0 : 0.0, 1e-12));
}

TEST_CASE("sum of squared axis projections is 4/3 |B|^2", "[spin_model]") {
  std::mt19937_64 rng(11);
  const auto axes = NVAxisSet::tetrahedral();
  for (int t = 0; t < 200; ++t) {
    const Vec3 B = random_unit(rng) * 7e-3;
    double s = 0.0;
    for (std::size_t i = 0; i < 4; ++i) s += std::pow(axis_projection(B, axes[i]), 2);
    CHECK_THAT(s, WithinRel(4.0 / 3.0 * dot(B, B), 1e-12));
  }
}

TEST_CASE("axis_projection", "[spin_model]") {
  const auto axes = NVAxisSet::tetrahedral();
  const double b0 = 3e-3;
  const Vec3 B = axes[0] * b0;
  CHECK_THAT(axis_projection(B, axes[0]), WithinRel(b0, 1e-12));
  CHECK_THAT(axis_projection(B, axes[1]), WithinRel(-b0 / 3.0, 1e-12));
  for (std::size_t i = 0; i < 4; ++i)
    CHECK_THAT(std::abs(axis_projection(Vec3{0, 0, b0}, axes[i])), WithinRel(b0 / std::numbers::sqrt3, 1e-12));

  SECTION("non-unit axis is rejected") {
    try {
      axis_projection(B, Vec3{1.0, 0.0, 1e-2});
      FAIL("expected invalid-axis error");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::invalid_axis);
    }
    CHECK_NOTHROW(axis_projection(B, Vec3{1.0 + 5e-7, 0.0, 0.0}));
  }
}

TEST_CASE("build_hamiltonian examples", "[spin_model]") {
  const Vec3 z{0, 0, 1};
  SpinParams p;
  p.D = 2.87e9;

  SECTION("zero field, no strain: diag(D, 0, D)") {
    const auto h = build_hamiltonian(p, z);
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) {
        const double want = (i == j && i != 1) ? p.D : 0.0;
        CHECK(h(i, j) == std::complex<double>(want, 0.0));
      }
  }
  SECTION("strain only: {0, D-E, D+E}") {
    p.E = 5e6;
    const auto l = eigenvalues3(build_hamiltonian(p, z));
    CHECK_THAT(l[0], WithinAbs(0.0, 1e-9 * p.D));
    CHECK_THAT(l[1], WithinRel(p.D - p.E, 1e-12));
    CHECK_THAT(l[2], WithinRel(p.D + p.E, 1e-12));
  }
  SECTION("5 mT axial field: {0, D - 140.12 MHz, D + 140.12 MHz}") {
    p.B = z * 5e-3;
    const double gb = kGammaElectronHzPerTesla * 5e-3;
    CHECK_THAT(gb, WithinAbs(140.12e6, 0.01e6));
    const auto l = eigenvalues3(build_hamiltonian(p, z));
    CHECK_THAT(l[0], WithinAbs(0.0, 1e-9 * p.D));
    CHECK_THAT(l[1], WithinRel(p.D - gb, 1e-12));
    CHECK_THAT(l[2], WithinRel(p.D + gb, 1e-12));
  }
}

TEST_CASE("Hamiltonian matches the spin-operator construction and is Hermitian with trace 2D", "[spin_model]") {
  std::mt19937_64 rng(5);
  const auto axes = NVAxisSet::tetrahedral();
  for (int t = 0; t < 300; ++t) {
    const SpinParams p = random_params(rng);
    const Vec3& n = axes[static_cast<std::size_t>(t % 4)];
    const auto h = build_hamiltonian(p, n);
    const double b_par = dot(p.B, n);
    const double b_perp = norm(p.B - n * b_par);
    const auto ref = oracle::nv_hamiltonian(p.D, p.E, p.gamma_e * b_par, p.gamma_e * b_perp);
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) CHECK(std::abs(h(i, j) - ref[i][j]) <= 1e-12 * p.D);
    CHECK(h.is_hermitian());
    CHECK_THAT(h.trace(), WithinRel(2.0 * p.D, 1e-9));
  }
}

TEST_CASE("eigenvalues3 examples and errors", "[spin_model]") {
  Matrix3c d;
  d(0, 0) = 3.0;
  d(1, 1) = -1.0;
  d(2, 2) = 2.0;
  const auto l = eigenvalues3(d);
  CHECK(l == Eigenvalues3{-1.0, 2.0, 3.0});

  Matrix3c bad = d;
  bad(0, 1) = {1.0, 0.0};
  bad(1, 0) = {0.5, 0.0};
  try {
    eigenvalues3(bad);
    FAIL("expected invalid-matrix error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::invalid_matrix);
  }
}

TEST_CASE("eigenvalues3 agrees with the Jacobi oracle on random Hermitian matrices", "[spin_model][property]") {
  std::mt19937_64 rng(99);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int t = 0; t < 500; ++t) {
    Matrix3c h;
    oracle::CMat3 o{};
    const double scale = std::pow(10.0, std::uniform_real_distribution<double>(-3, 9)(rng));
    for (int i = 0; i < 3; ++i) {
      h(i, i) = {scale * n(rng), 0.0};
      for (int j = i + 1; j < 3; ++j) {
        h(i, j) = {scale * n(rng), scale * n(rng)};
        h(j, i) = std::conj(h(i, j));
      }
    }
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) o[i][j] = h(i, j);
    const auto got = eigenvalues3(h);
    const auto want = oracle::hermitian_eigenvalues(o);
    const double s = max_abs_eig(got);
    for (int k = 0; k < 3; ++k) CHECK(std::abs(got[k] - want[k]) <= 1e-9 * s);
    CHECK(std::abs(got[0] + got[1] + got[2] - h.trace()) <= 1e-9 * s);
    for (int k = 0; k < 3; ++k) CHECK(std::abs(characteristic_polynomial(h, got[k])) <= 1e-9 * s * s * s);
  }
}

TEST_CASE("eigenvalues3 handles near-degenerate spectra", "[spin_model]") {
  Matrix3c h;
  h(0, 0) = 2.87e9;
  h(2, 2) = 2.87e9;
  h(0, 2) = h(2, 0) = 1e-3;
  const auto l = eigenvalues3(h);
  CHECK_THAT(l[0], WithinAbs(0.0, 1e-6));
  CHECK_THAT(l[1], WithinAbs(2.87e9 - 1e-3, 1e-9 * 2.87e9));
  CHECK_THAT(l[2], WithinAbs(2.87e9 + 1e-3, 1e-9 * 2.87e9));

  Matrix3c scalar;
  for (int i = 0; i < 3; ++i) scalar(i, i) = 7.0;
  scalar(0, 1) = {1e-14, 1e-14};
  scalar(1, 0) = std::conj(scalar(0, 1));
  const auto s = eigenvalues3(scalar);
  for (double v : s) CHECK_THAT(v, WithinRel(7.0, 1e-12));
}

TEST_CASE("exact transitions", "[spin_model]") {
  const Vec3 z{0, 0, 1};
  SpinParams p;

  SECTION("no field, no strain: both at D") {
    const auto t = exact_transitions(p, z);
    CHECK_THAT(t.f_minus, WithinRel(p.D, 1e-12));
    CHECK_THAT(t.f_plus, WithinRel(p.D, 1e-12));
  }
  SECTION("axial field reproduces the first-order formula") {
    for (double b : {1e-4, 1e-3, 5e-3, 2e-2}) {
      p.B = z * b;
      const auto e = exact_transitions(p, z);
      const auto a = approx_transitions(p, z);
      CHECK_THAT(e.f_minus, WithinRel(a.f_minus, 1e-9));
      CHECK_THAT(e.f_plus, WithinRel(a.f_plus, 1e-9));
    }
  }
  SECTION("transverse field shifts the midpoint quadratically") {
    const double gb = 10e6;
    p.B = Vec3{gb / p.gamma_e, 0, 0};
    const double dev = exact_transitions(p, z).midpoint() - p.D;
    CHECK(dev > 10e3);
    CHECK(dev < 100e3);
    p.B = Vec3{0.5 * gb / p.gamma_e, 0, 0};
    const double dev_half = exact_transitions(p, z).midpoint() - p.D;
    CHECK(dev / dev_half >= 3.5);
  }
  SECTION("strong field is reported") {
    p.B = z * (0.6 * p.D / p.gamma_e);
    try {
      exact_transitions(p, z);
      FAIL("expected regime error");
    } catch (const RegimeError& e) {
      CHECK(e.code() == ErrorCode::regime);
      CHECK_THAT(e.ratio(), WithinRel(0.6, 1e-12));
    }
  }
}

TEST_CASE("approximate transitions", "[spin_model]") {
  const auto axes = NVAxisSet::tetrahedral();
  SpinParams p;
  const auto zero = approx_transitions(p, axes[0]);
  CHECK(zero.f_minus == p.D);
  CHECK(zero.f_plus == p.D);

  p.B = axes[0] * (1.4012e8 / p.gamma_e);
  const auto t = approx_transitions(p, axes[0]);
  CHECK_THAT(t.f_minus, WithinRel(p.D - 1.4012e8, 1e-12));
  CHECK_THAT(t.f_plus, WithinRel(p.D + 1.4012e8, 1e-12));
  CHECK_THAT(t.f_minus, WithinAbs(2.7299e9, 0.00005e9));
  CHECK_THAT(t.f_plus, WithinAbs(3.0101e9, 0.00005e9));

  const auto all = approx_transitions_all(p, axes);
  for (std::size_t i = 1; i < 4; ++i) {
    CHECK_THAT(all[i].half_splitting(), WithinRel(1.4012e8 / 3.0, 1e-12));
    CHECK(all[i].axis_index == static_cast<int>(i) + 1);
  }
}

TEST_CASE("midpoint of the first-order pair is D for any field", "[spin_model][property]") {
  std::mt19937_64 rng(3);
  const auto axes = NVAxisSet::tetrahedral();
  for (int t = 0; t < 500; ++t) {
    const SpinParams p = random_params(rng);
    for (const auto& pair : approx_transitions_all(p, axes)) {
      CHECK(pair.f_plus >= pair.f_minus);
      CHECK_THAT(pair.midpoint(), WithinRel(p.D, 1e-15));
    }
  }
}

TEST_CASE("transitions are invariant under a common rotation of field and axes", "[spin_model][property]") {
  std::mt19937_64 rng(17);
  const auto axes = NVAxisSet::tetrahedral();
  for (int t = 0; t < 200; ++t) {
    const SpinParams p = random_params(rng);
    const Vec3 k = random_unit(rng);
    const double angle = std::uniform_real_distribution<double>(0.0, 2.0 * std::numbers::pi)(rng);
    SpinParams q = p;
    q.B = rotate(p.B, k, angle);
    for (std::size_t i = 0; i < 4; ++i) {
      const Vec3 n = normalized(rotate(axes[i], k, angle));
      const auto a = exact_transitions(p, axes[i]);
      const auto b = exact_transitions(q, n);
      CHECK_THAT(b.f_minus, WithinRel(a.f_minus, 1e-9));
      CHECK_THAT(b.f_plus, WithinRel(a.f_plus, 1e-9));
    }
  }
}

TEST_CASE("invalid spin parameters are rejected", "[spin_model]") {
  SpinParams p;
  p.D = -1.0;
  CHECK_THROWS_AS(build_hamiltonian(p, Vec3{0, 0, 1}), Error);
  p = {};
  p.E = -1.0;
  CHECK_THROWS_AS(exact_transitions(p, Vec3{0, 0, 1}), Error);
  p = {};
  p.gamma_e = 0.0;
  CHECK_THROWS_AS(approx_transitions(p, Vec3{0, 0, 1}), Error);
}
