// Writes the polynomial coefficient bundle used by the case-1 generator:
// a month visit grid on [0, 1], two quadratic mean curves, a linear shared
// pair and a quadratic/cubic specific pair of orthonormal eigenfunctions.
#include <cmath>
#include <fstream>
#include <iostream>
#include <vector>

#include <json.hpp>


namespace {

using Poly = std::vector<double>;

Poly multiply(const Poly& a, const Poly& b) {
  Poly r(a.size() + b.size() - 1, 0.0);
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < b.size(); ++j) r[i + j] += a[i] * b[j];
  return r;
}

double integral01(const Poly& p) {
  double s = 0.0;
  for (std::size_t k = 0; k < p.size(); ++k) s += p[k] / static_cast<double>(k + 1);
  return s;
}

Poly axpy(double a, const Poly& x, Poly y) {
  if (y.size() < x.size()) y.resize(x.size(), 0.0);
  for (std::size_t k = 0; k < x.size(); ++k) y[k] += a * x[k];
  return y;
}

std::vector<Poly> gram_schmidt(std::vector<Poly> v) {
  std::vector<Poly> out;
  for (Poly p : v) {
    for (const Poly& q : out) p = axpy(-integral01(multiply(p, q)), q, p);
    const double norm = std::sqrt(integral01(multiply(p, p)));
    for (double& c : p) c /= norm;
    out.push_back(p);
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  const std::string path = argc > 1 ? argv[1] : std::string(FJM_DATA_DIR) + "/case1_bundle.json";
  std::vector<double> grid;
  for (double month : {0, 6, 12, 18, 24, 36, 48, 60, 72, 84, 96}) grid.push_back(month / 96.0);

  nlohmann::json js;
  js["version"] = 1;
  js["grid"] = grid;
  const auto curves = [](const std::vector<Poly>& ps) {
    nlohmann::json a = nlohmann::json::array();
    for (const Poly& p : ps) a.push_back({{"coef", p}});
    return a;
  };
  js["mu"] = curves({{18.0, 6.0, 6.0}, {34.0, -4.0, -4.0}});
  js["phi"] = curves(gram_schmidt({{1.0, 1.0}, {1.0}}));
  // Specific eigenfunctions orthogonal to the shared span{1, t}: quadratic
  // and cubic shifted Legendre shapes.
  const std::vector<Poly> legendre = gram_schmidt({{1.0}, {0.0, 1.0}, {0.0, 0.0, 1.0}, {0.0, 0.0, 0.0, 1.0}});
  js["psi"] = curves({legendre[2], legendre[3]});

  std::ofstream out(path);
  if (!out) {
    std::cerr << "cannot write " << path << '\n';
    return 1;
  }
  out << js.dump(2) << '\n';
  std::cout << "wrote " << path << '\n';
  return 0;
}
