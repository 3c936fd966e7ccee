#include "dwim/value.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>

namespace dwim {

Region Region::intersect(const Region& o) const {
  return Region{std::max(min_c2x, o.min_c2x), std::min(max_c2x, o.max_c2x), std::max(min_c2y, o.min_c2y),
                std::min(max_c2y, o.max_c2y)};
}

std::string_view type_name(const Value& v) {
  struct Visitor {
    std::string_view operator()(const NoneValue&) const { return "NoneType"; }
    std::string_view operator()(bool) const { return "bool"; }
    std::string_view operator()(double) const { return "number"; }
    std::string_view operator()(const std::string&) const { return "str"; }
    std::string_view operator()(const ObjectRef&) const { return "ObjectPatch"; }
    std::string_view operator()(const Region&) const { return "ImagePatch"; }
    std::string_view operator()(const ValueList&) const { return "list"; }
  };
  return std::visit(Visitor{}, v.data);
}

std::string format_number(double d) {
  if (std::isfinite(d) && d == std::floor(d) && std::fabs(d) < 1e15)
    return std::to_string(static_cast<long long>(d));
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, d);
  return std::string(buf, end);
}

namespace {

int ceil_half(int v) { return v >= 0 ? (v + 1) / 2 : v / 2; }
int floor_half(int v) { return v >= 0 ? v / 2 : (v - 1) / 2; }

std::string repr_impl(const Value& v, bool nested) {
  struct Visitor {
    bool nested;
    std::string operator()(const NoneValue&) const { return "None"; }
    std::string operator()(bool b) const { return b ? "True" : "False"; }
    std::string operator()(double d) const { return format_number(d); }
    std::string operator()(const std::string& s) const { return nested ? "'" + s + "'" : s; }
    std::string operator()(const ObjectRef& o) const {
      return "ObjectPatch(" + o.category + ", left=" + std::to_string(o.box.left) +
             ", upper=" + std::to_string(o.box.upper) + ", right=" + std::to_string(o.box.right) +
             ", lower=" + std::to_string(o.box.lower) + ")";
    }
    std::string operator()(const Region& r) const {
      return "ImagePatch(left=" + std::to_string(ceil_half(r.min_c2x)) +
             ", upper=" + std::to_string(ceil_half(r.min_c2y)) +
             ", right=" + std::to_string(floor_half(r.max_c2x)) +
             ", lower=" + std::to_string(floor_half(r.max_c2y)) + ")";
    }
    std::string operator()(const ValueList& l) const {
      std::string out = "[";
      for (std::size_t i = 0; i < l.size(); ++i) {
        if (i) out += ", ";
        out += repr_impl(l[i], true);
      }
      return out + "]";
    }
  };
  return std::visit(Visitor{nested}, v.data);
}

}  // namespace

std::string repr(const Value& v) { return repr_impl(v, false); }

}  // namespace dwim
