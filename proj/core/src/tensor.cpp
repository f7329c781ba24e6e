#include "coordconv/tensor.hpp"

#include <sstream>

namespace coordconv {

std::string Shape::str() const {
  std::ostringstream os;
  os << '[';
  for (size_t i = 0; i < dims_.size(); ++i) {
    if (i) os << ", ";
    os << dims_[i];
  }
  os << ']';
  return os.str();
}

template class Tensor<float>;
template class Tensor<double>;

}  // namespace coordconv
