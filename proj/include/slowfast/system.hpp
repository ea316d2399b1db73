#pragma once

#include <Eigen/Dense>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>

namespace slowfast {

// Nonlinearity evaluated into a caller-provided buffer (no allocation in hot loops).
using NonlinearFn =
    std::function<void(std::span<const double> x, std::span<const double> y,
                       std::span<double> out)>;

struct DomainBox {
  Eigen::VectorXd lo;
  Eigen::VectorXd hi;
};

// Complete slow-fast problem definition:
//   dx = (A x + f(x,y)) dt
//   dy = (1/eps)(B y + g(x,y)) dt + (sigma/sqrt(eps)) dW
struct SlowFastSystem {
  int n = 0;
  int m = 0;
  Eigen::MatrixXd A;
  Eigen::MatrixXd B;
  NonlinearFn f;
  NonlinearFn g;
  double sigma = 0.0;
  double eps = 0.0;

  std::string f_name;  // registry names, for manifests
  std::string g_name;

  // Operating-domain metadata used for LP certification when present.
  std::optional<double> lip_f;
  std::optional<double> lip_g;
  std::optional<DomainBox> box;

  // Checks eps in (0,1], sigma != 0, finite matrices, f(0,0)=0, g(0,0)=0.
  void validate() const;

  SlowFastSystem with_eps(double new_eps) const {
    SlowFastSystem s = *this;
    s.eps = new_eps;
    return s;
  }

  void eval_f(std::span<const double> x, std::span<const double> y,
              std::span<double> out) const {
    f(x, y, out);
  }
  void eval_g(std::span<const double> x, std::span<const double> y,
              std::span<double> out) const {
    g(x, y, out);
  }
};

// Registered nonlinearity pair with defaults; user-extensible at compile time
// via register_nonlinearity_pair() before first use.
struct NonlinearityEntry {
  int n = 0;
  int m = 0;
  NonlinearFn f;
  NonlinearFn g;
  Eigen::MatrixXd default_A;
  Eigen::MatrixXd default_B;
  std::optional<double> lip_f;
  std::optional<double> lip_g;
  std::optional<DomainBox> box;
  std::string doc;
};

const std::map<std::string, NonlinearityEntry>& nonlinearity_registry();
void register_nonlinearity_pair(const std::string& name, NonlinearityEntry entry);

// Assemble a system from a registry entry. Builtins: "toy", "linear_test",
// "linear_y", "fast_forced".
SlowFastSystem make_builtin_system(const std::string& name, double sigma, double eps);

}  // namespace slowfast
