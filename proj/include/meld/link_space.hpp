#pragma once

#include <string>
#include <vector>

#include "meld/types.hpp"

namespace meld {

// Support of one coordinate of the link parameter.
struct CoordinateBound {
  enum class Kind { unbounded, lower, interval, integer };

  Kind kind = Kind::unbounded;
  double lo = -kInf;
  double hi = kInf;

  static CoordinateBound real() { return {}; }
  static CoordinateBound lower(double lo) { return {Kind::lower, lo, kInf}; }
  static CoordinateBound interval(double lo, double hi);
  // Integer lattice {lo, lo+1, ..., hi}; the default is the positive integers.
  static CoordinateBound integer(double lo = 1.0, double hi = kInf);

  bool contains(double x) const;
  bool is_lattice() const { return kind == Kind::integer; }
  bool operator==(const CoordinateBound&) const = default;
};

class LinkSpace {
 public:
  LinkSpace() = default;
  explicit LinkSpace(std::vector<CoordinateBound> bounds);

  static LinkSpace real_line(int dim);

  int dim() const { return static_cast<int>(bounds_.size()); }
  const CoordinateBound& operator[](int j) const { return bounds_[static_cast<std::size_t>(j)]; }
  const std::vector<CoordinateBound>& bounds() const { return bounds_; }

  bool contains(const Vector& phi) const;
  bool has_lattice() const;

  bool operator==(const LinkSpace&) const = default;

  std::string describe() const;

 private:
  std::vector<CoordinateBound> bounds_;
};

// Axis-aligned integration/plotting box.
struct Box {
  Vector lo;
  Vector hi;
  int dim() const { return static_cast<int>(lo.size()); }
};

}  // namespace meld
