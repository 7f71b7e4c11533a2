#pragma once

namespace cfrec {

struct Interval {
  double lower = 0.0;
  double upper = 0.0;
};

}  // namespace cfrec
