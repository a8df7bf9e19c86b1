#pragma once

#include "liehmp/io.hpp"
#include "liehmp/lie_group.hpp"

namespace liehmp {

template <int Dim, int N>
io::json group_to_json(const LieGroup<Dim, N>& group) {
  io::json j;
  j["dim"] = Dim;
  j["matrix_size"] = N;
  j["basis"] = io::json::array();
  for (const auto& e : group.basis()) j["basis"].push_back(io::to_json_rowmajor(e));
  io::json ip = io::json::array();
  for (int r = 0; r < Dim; ++r) ip.push_back(io::to_json_vector(group.inner_product().row(r)));
  j["inner_product"] = ip;
  return j;
}

/// Rebuilds a group from its JSON description. Structure constants are
/// derived from the basis, never read.
template <int Dim, int N>
LieGroup<Dim, N> group_from_json(const io::json& j) {
  try {
    if (j.at("dim").get<int>() != Dim || j.at("matrix_size").get<int>() != N) {
      throw InvalidGroupSpec("dimension fields do not match the requested group type");
    }
    const auto& basis = j.at("basis");
    if (!basis.is_array() || basis.size() != static_cast<std::size_t>(Dim)) {
      throw InvalidGroupSpec("basis must list exactly dim matrices");
    }
    typename LieGroup<Dim, N>::Basis b;
    for (int i = 0; i < Dim; ++i) b[i] = io::matrix_from_json<N, N>(basis[i], "basis");
    const auto& ip = j.at("inner_product");
    if (!ip.is_array() || ip.size() != static_cast<std::size_t>(Dim)) {
      throw InvalidGroupSpec("inner_product must have dim rows");
    }
    typename LieGroup<Dim, N>::AdMat m;
    for (int r = 0; r < Dim; ++r) {
      if (ip[r].size() != static_cast<std::size_t>(Dim)) {
        throw InvalidGroupSpec("inner_product must be square");
      }
      for (int c = 0; c < Dim; ++c) m(r, c) = ip[r][c].get<double>();
    }
    return LieGroup<Dim, N>(b, m);
  } catch (const io::json::exception& e) {
    throw InvalidGroupSpec(std::string("malformed group description: ") + e.what());
  } catch (const InvalidGroupSpec&) {
    throw;
  } catch (const Error& e) {
    throw InvalidGroupSpec(e.what());
  }
}

}  // namespace liehmp
