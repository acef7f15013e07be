#include "hec/numerics/params.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include "hec/config.hpp"
#include "hec/error.hpp"

namespace hec::num {

Tensor& ParameterSet::add(const std::string& name, Tensor value) {
  auto [it, inserted] = params_.emplace(name, std::move(value));
  require(inserted, ErrorKind::kInvalidArgument, "duplicate parameter '" + name + "'");
  return it->second;
}

Tensor& ParameterSet::add_uniform(const std::string& name, Shape shape,
                                  std::size_t fan_in, std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  return add(name, Tensor::uniform(std::move(shape), bound, rng));
}

Tensor& ParameterSet::add_filled(const std::string& name, Shape shape, double value) {
  return add(name, Tensor(std::move(shape), value));
}

Tensor& ParameterSet::at(const std::string& name) {
  auto it = params_.find(name);
  require(it != params_.end(), ErrorKind::kNotFound, "unknown parameter '" + name + "'");
  return it->second;
}

const Tensor& ParameterSet::at(const std::string& name) const {
  auto it = params_.find(name);
  require(it != params_.end(), ErrorKind::kNotFound, "unknown parameter '" + name + "'");
  return it->second;
}

std::size_t ParameterSet::element_count() const {
  std::size_t n = 0;
  for (const auto& [name, t] : params_) n += t.size();
  return n;
}

Var Binder::operator()(const std::string& name) {
  auto it = bound_.find(name);
  if (it != bound_.end()) return it->second;
  Var v{&graph_, graph_.parameter(name, params_.at(name))};
  bound_.emplace(name, v);
  return v;
}

// ------------------------------------------------------------ checkpoint ----

namespace {

constexpr char kMagic[8] = {'H', 'E', 'C', 'C', 'K', 'P', 'T', '1'};

template <typename T>
void put(std::ostream& os, T value) {
  static_assert(std::is_trivially_copyable_v<T>);
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) {
    std::reverse(bytes, bytes + sizeof(T));
  }
  os.write(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <typename T>
T get(std::istream& is, const std::filesystem::path& path) {
  unsigned char bytes[sizeof(T)];
  is.read(reinterpret_cast<char*>(bytes), sizeof(T));
  require(is.good(), ErrorKind::kIo, "truncated checkpoint " + path.string());
  if constexpr (std::endian::native == std::endian::big) {
    std::reverse(bytes, bytes + sizeof(T));
  }
  T value;
  std::memcpy(&value, bytes, sizeof(T));
  return value;
}

std::string get_string(std::istream& is, std::uint32_t n, const std::filesystem::path& path) {
  std::string s(n, '\0');
  if (n) is.read(s.data(), n);
  require(is.good() || (n == 0), ErrorKind::kIo, "truncated checkpoint " + path.string());
  return s;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const ParameterSet& params,
                     const std::string& config_text) {
  std::ofstream os(path, std::ios::binary);
  require(os.good(), ErrorKind::kIo, "cannot write checkpoint " + path.string());
  os.write(kMagic, sizeof(kMagic));
  put<std::uint32_t>(os, static_cast<std::uint32_t>(config_text.size()));
  os.write(config_text.data(), static_cast<std::streamsize>(config_text.size()));
  put<std::uint32_t>(os, static_cast<std::uint32_t>(params.size()));
  for (const auto& [name, t] : params) {
    put<std::uint32_t>(os, static_cast<std::uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    put<std::uint32_t>(os, static_cast<std::uint32_t>(t.rank()));
    for (std::size_t d : t.shape()) put<std::uint64_t>(os, d);
    for (double v : t.data()) put<double>(os, v);
  }
  require(os.good(), ErrorKind::kIo, "failed writing checkpoint " + path.string());
}

ParameterSet load_checkpoint(const std::filesystem::path& path, std::string* config_text) {
  std::ifstream is(path, std::ios::binary);
  require(is.good(), ErrorKind::kNotFound, "missing checkpoint " + path.string());
  char magic[sizeof(kMagic)];
  is.read(magic, sizeof(magic));
  require(is.good() && std::memcmp(magic, kMagic, sizeof(kMagic)) == 0, ErrorKind::kIo,
          "not a checkpoint file: " + path.string());
  const auto config_len = get<std::uint32_t>(is, path);
  std::string config = get_string(is, config_len, path);
  if (config_text) *config_text = std::move(config);
  const auto count = get<std::uint32_t>(is, path);
  ParameterSet params;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto name_len = get<std::uint32_t>(is, path);
    std::string name = get_string(is, name_len, path);
    const auto rank = get<std::uint32_t>(is, path);
    Shape shape(rank);
    for (auto& d : shape) d = static_cast<std::size_t>(get<std::uint64_t>(is, path));
    std::vector<double> data(shape_size(shape));
    for (double& v : data) v = get<double>(is, path);
    params.add(name, Tensor(std::move(shape), std::move(data)));
  }
  return params;
}

// ------------------------------------------------------------ grad check ----

namespace {

double rel_error(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-8});
}

void check_eps(double eps) {
  require(eps > 0.0 && eps <= 1e-2, ErrorKind::kInvalidArgument,
          "grad_check eps must lie in (0, 1e-2]");
}

}  // namespace

GradCheckReport grad_check(const TensorFn& f, const Tensor& x, double eps, double tolerance) {
  ParameterSet params;
  params.add("x", x);
  return grad_check(
      [&f](Binder& bind) { return f(bind.graph(), bind("x")); }, params, eps, tolerance);
}

GradCheckReport grad_check(const ParamFn& f, ParameterSet& params, double eps,
                           double tolerance) {
  check_eps(eps);
  auto evaluate = [&]() {
    Graph g;
    Binder bind(g, params);
    Var out = f(bind);
    require(out.value().size() == 1, ErrorKind::kShape, "grad_check needs a scalar function");
    return out.value().item();
  };

  GradientMap analytic;
  {
    Graph g;
    Binder bind(g, params);
    Var out = f(bind);
    const double first = out.value().item();
    require(evaluate() == first, ErrorKind::kInvalidArgument,
            "grad_check: function is not deterministic");
    analytic = g.backward(out.id);
  }

  GradCheckReport report;
  for (auto& [name, tensor] : params) {
    auto it = analytic.find(name);
    for (std::size_t i = 0; i < tensor.size(); ++i) {
      const double saved = tensor[i];
      const auto at = [&](double offset) {
        tensor[i] = saved + offset;
        return evaluate();
      };
      const double near = at(eps) - at(-eps);
      const double far = at(2 * eps) - at(-2 * eps);
      tensor[i] = saved;
      // Fourth-order central difference.
      const double numeric = (8.0 * near - far) / (12.0 * eps);
      const double exact = it == analytic.end() ? 0.0 : it->second[i];
      const double err = rel_error(exact, numeric);
      ++report.checked;
      if (err > report.max_rel_error || report.worst.empty()) {
        report.max_rel_error = std::max(report.max_rel_error, err);
        if (err >= report.max_rel_error) {
          report.worst = name + "[" + std::to_string(i) + "] analytic " + format_double(exact) +
                         " numeric " + format_double(numeric);
        }
      }
    }
  }
  report.passed = report.max_rel_error <= tolerance;
  return report;
}

}  // namespace hec::num
