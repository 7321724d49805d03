#include "meld/link_space.hpp"

#include <cmath>
#include <sstream>

#include "meld/errors.hpp"

namespace meld {

CoordinateBound CoordinateBound::interval(double lo, double hi) {
  if (!(lo < hi)) throw ConfigError("interval bound requires lo < hi");
  return {Kind::interval, lo, hi};
}

CoordinateBound CoordinateBound::integer(double lo, double hi) {
  if (!(lo <= hi)) throw ConfigError("integer lattice requires lo <= hi");
  return {Kind::integer, std::ceil(lo), std::isinf(hi) ? hi : std::floor(hi)};
}

bool CoordinateBound::contains(double x) const {
  if (std::isnan(x)) return false;
  switch (kind) {
    case Kind::unbounded:
      return std::isfinite(x);
    case Kind::lower:
      return std::isfinite(x) && x >= lo;
    case Kind::interval:
      return x >= lo && x <= hi;
    case Kind::integer:
      return std::isfinite(x) && x == std::round(x) && x >= lo && x <= hi;
  }
  return false;
}

LinkSpace::LinkSpace(std::vector<CoordinateBound> bounds) : bounds_(std::move(bounds)) {
  if (bounds_.empty()) throw ConfigError("link space needs dim >= 1");
}

LinkSpace LinkSpace::real_line(int dim) {
  if (dim < 1) throw ConfigError("link space needs dim >= 1");
  return LinkSpace(std::vector<CoordinateBound>(static_cast<std::size_t>(dim)));
}

bool LinkSpace::contains(const Vector& phi) const {
  if (phi.size() != dim()) return false;
  for (int j = 0; j < dim(); ++j) {
    if (!bounds_[static_cast<std::size_t>(j)].contains(phi[j])) return false;
  }
  return true;
}

bool LinkSpace::has_lattice() const {
  for (const auto& b : bounds_) {
    if (b.is_lattice()) return true;
  }
  return false;
}

std::string LinkSpace::describe() const {
  std::ostringstream os;
  os << "LinkSpace(dim=" << dim() << ")";
  return os.str();
}

}  // namespace meld
