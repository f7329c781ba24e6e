#include "coordconv/graph.hpp"

namespace coordconv {

template class Graph<float>;
template class Graph<double>;

}  // namespace coordconv
