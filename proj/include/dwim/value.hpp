#pragma once

#include <string>
#include <variant>
#include <vector>

namespace dwim {

/// Axis-aligned box in canvas pixels; y grows downward (upper < lower).
struct Box {
  int left = 0;
  int upper = 0;
  int right = 0;
  int lower = 0;

  /// Centers in doubled coordinates keep spatial comparisons integral.
  int center2x() const { return left + right; }
  int center2y() const { return upper + lower; }

  bool operator==(const Box&) const = default;
};

/// One detection. object_id is the scene index, or -1 for a hallucinated box.
struct ObjectRef {
  std::string category;
  Box box;
  int object_id = -1;

  bool operator==(const ObjectRef&) const = default;
};

/// Image region a tool may be restricted to, expressed as inclusive bounds on
/// doubled object centers. The full image is [0, 2W] x [0, 2H].
struct Region {
  int min_c2x = 0;
  int max_c2x = 0;
  int min_c2y = 0;
  int max_c2y = 0;

  static Region full(int width, int height) { return Region{0, 2 * width, 0, 2 * height}; }
  bool contains(const Box& b) const {
    return b.center2x() >= min_c2x && b.center2x() <= max_c2x && b.center2y() >= min_c2y &&
           b.center2y() <= max_c2y;
  }
  Region intersect(const Region& o) const;

  bool operator==(const Region&) const = default;
};

struct NoneValue {
  bool operator==(const NoneValue&) const = default;
};

struct Value;
using ValueList = std::vector<Value>;

/// Runtime value of the tool DSL.
struct Value {
  std::variant<NoneValue, bool, double, std::string, ObjectRef, Region, ValueList> data;

  Value() = default;
  Value(NoneValue v) : data(v) {}
  Value(bool b) : data(b) {}
  Value(double d) : data(d) {}
  Value(int i) : data(static_cast<double>(i)) {}
  Value(std::string s) : data(std::move(s)) {}
  Value(const char* s) : data(std::string(s)) {}
  Value(ObjectRef o) : data(std::move(o)) {}
  Value(Region r) : data(r) {}
  Value(ValueList l) : data(std::move(l)) {}

  template <class T>
  bool is() const {
    return std::holds_alternative<T>(data);
  }
  template <class T>
  const T& as() const {
    return std::get<T>(data);
  }

  bool operator==(const Value&) const = default;
};

std::string_view type_name(const Value& v);

/// Display form used for feedback payloads and predictions. Top-level strings
/// print raw; strings nested in lists are quoted.
std::string repr(const Value& v);

std::string format_number(double d);

}  // namespace dwim
