#pragma once

#include <Eigen/Dense>
#include <unsupported/Eigen/MatrixFunctions>

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "liehmp/errors.hpp"

namespace liehmp {

/// A point of a matrix Lie group, stored as its square matrix.
///
/// The element itself carries no group-membership guarantee; use
/// `LieGroup::element` to build a validated one.
template <int N>
class GroupElement {
 public:
  using Mat = Eigen::Matrix<double, N, N>;

  GroupElement() : m_(Mat::Identity()) {}
  explicit GroupElement(const Mat& m) : m_(m) {}

  static GroupElement identity() { return GroupElement(); }

  const Mat& matrix() const { return m_; }
  double operator()(int r, int c) const { return m_(r, c); }

  friend GroupElement operator*(const GroupElement& a, const GroupElement& b) {
    return GroupElement(a.m_ * b.m_);
  }
  friend bool operator==(const GroupElement& a, const GroupElement& b) {
    return a.m_ == b.m_;
  }

 private:
  Mat m_;
};

/// Result of a logarithm that reports its conditioning instead of throwing.
template <int Dim>
struct LogResult {
  Eigen::Matrix<double, Dim, 1> v;
  double angle = 0.0;
  bool ill_conditioned = false;
};

/**
 * @brief Matrix Lie group described by data: a basis of its algebra and an
 * inner product on it.
 *
 * Structure constants c^k_ij with [e_i, e_j] = sum_k c^k_ij e_k are derived
 * from the basis at construction. Algebra vectors and covectors are both
 * coordinate vectors of length Dim (in the basis and its dual basis).
 *
 * When the basis spans the skew-symmetric 3x3 matrices the group is treated as
 * SO(3), and exp/log use closed forms.
 */
template <int Dim, int N>
class LieGroup {
 public:
  static constexpr int kDim = Dim;
  static constexpr int kMatrixSize = N;

  using Vec = Eigen::Matrix<double, Dim, 1>;
  using Mat = Eigen::Matrix<double, N, N>;
  using AdMat = Eigen::Matrix<double, Dim, Dim>;
  using Element = GroupElement<N>;
  using Basis = std::array<Mat, Dim>;

  enum class Kind { General, SO3 };

  /// Below this rotation angle exp/log switch to truncated series.
  static constexpr double kSmallAngle = 1e-4;
  /// log refuses angles within this distance of pi.
  static constexpr double kCutLocusMargin = 1e-6;
  /// log flags results within this distance of pi as ill-conditioned.
  static constexpr double kIllConditionedMargin = 1e-4;

  LieGroup(const Basis& basis, const AdMat& inner_product)
      : basis_(basis), inner_(inner_product) {
    for (int i = 0; i < Dim; ++i) {
      flat_.col(i) = Eigen::Map<const Eigen::Matrix<double, N * N, 1>>(basis_[i].data());
    }
    const Eigen::JacobiSVD<Eigen::Matrix<double, N * N, Dim>> svd(flat_);
    const Vec s = svd.singularValues();
    if (s(Dim - 1) < 1e-12 * std::max(1.0, s(0))) {
      throw InvalidGroupSpec("basis matrices are linearly dependent");
    }
    pinv_ = (flat_.transpose() * flat_).inverse() * flat_.transpose();

    for (int i = 0; i < Dim; ++i) {
      for (int j = 0; j < Dim; ++j) {
        const Mat comm = basis_[i] * basis_[j] - basis_[j] * basis_[i];
        Vec c;
        try {
          c = vee(comm, 1e-9);
        } catch (const NotInAlgebra&) {
          throw InvalidGroupSpec("basis is not closed under the matrix commutator");
        }
        for (int k = 0; k < Dim; ++k) structure_[k](i, j) = c(k);
      }
    }
    validate();
    kind_ = detect_kind();

    inner_inv_ = inner_.inverse();
  }

  Kind kind() const { return kind_; }
  const Basis& basis() const { return basis_; }
  const AdMat& inner_product() const { return inner_; }

  /// c^k_ij, returned as the matrix (i, j) for fixed k.
  const AdMat& structure_constants(int k) const { return structure_[k]; }

  static Vec basis_vector(int i) { return Vec::Unit(i); }

  // ---------------------------------------------------------------- hat / vee

  Mat hat(const Vec& v) const {
    Mat m = Mat::Zero();
    for (int i = 0; i < Dim; ++i) m += v(i) * basis_[i];
    return m;
  }

  /// Coordinates of an algebra matrix. Throws NotInAlgebra when X has a
  /// component outside the span of the basis (for so(3): a symmetric part).
  Vec vee(const Mat& X, double tol = 1e-10) const {
    const Eigen::Map<const Eigen::Matrix<double, N * N, 1>> x(X.data());
    const Vec v = pinv_ * x;
    const double resid = (flat_ * v - x).cwiseAbs().maxCoeff();
    if (resid > tol * std::max(1.0, X.cwiseAbs().maxCoeff())) {
      throw NotInAlgebra("matrix is not in the Lie algebra (residual " +
                         std::to_string(resid) + ")");
    }
    return v;
  }

  // ------------------------------------------------------------ brackets, ad

  /// ad_X as a Dim x Dim matrix: ad(X)_{kj} = sum_i X_i c^k_{ij}.
  AdMat ad_matrix(const Vec& X) const {
    AdMat a;
    for (int k = 0; k < Dim; ++k) a.row(k) = X.transpose() * structure_[k];
    return a;
  }

  Vec bracket(const Vec& X, const Vec& Y) const { return ad_matrix(X) * Y; }

  /// The commutator route; used to cross-check the structure constants.
  Vec bracket_by_commutator(const Vec& X, const Vec& Y) const {
    const Mat x = hat(X);
    const Mat y = hat(Y);
    return vee(x * y - y * x, 1e-9);
  }

  /// ad*_X(p) in dual coordinates: <ad*_X p, Y> = <p, [X, Y]>.
  Vec ad_star_apply(const Vec& X, const Vec& p) const {
    return ad_matrix(X).transpose() * p;
  }

  // ------------------------------------------------------------- exp / log

  Element exp(const Vec& X) const {
    if (kind_ == Kind::SO3) return Element(so3_exp(hat(X)));
    return Element(hat(X).exp());
  }

  /// Logarithm with conditioning report. For SO(3) the angle is recovered by
  /// atan2, which stays accurate close to pi.
  LogResult<Dim> log_with_diagnostics(const Element& g) const {
    LogResult<Dim> out;
    if (kind_ != Kind::SO3) {
      const Mat l = g.matrix().log();
      out.v = vee(l, 1e-8);
      out.angle = out.v.norm();
      return out;
    }
    const Mat& R = g.matrix();
    const Mat A = 0.5 * (R - R.transpose());
    const Vec a = vee_skew(A);
    const double s = a.norm();
    const double c = 0.5 * (R.trace() - 1.0);
    const double theta = std::atan2(s, c);
    out.angle = theta;
    const double gap = std::numbers::pi - theta;
    out.ill_conditioned = gap < kIllConditionedMargin;
    if (gap < kCutLocusMargin) {
      out.v = Vec::Constant(std::numeric_limits<double>::quiet_NaN());
      return out;
    }
    double scale;
    if (theta < kSmallAngle) {
      const double t2 = theta * theta;
      scale = 1.0 + t2 / 6.0 + 7.0 * t2 * t2 / 360.0;
    } else {
      scale = theta / s;
    }
    out.v = scale * a;
    return out;
  }

  /// Throws NearCutLocus when the rotation angle is within 1e-6 of pi.
  Vec log(const Element& g) const {
    const auto r = log_with_diagnostics(g);
    if (kind_ == Kind::SO3 && std::numbers::pi - r.angle < kCutLocusMargin) {
      throw NearCutLocus("rotation angle " + std::to_string(r.angle) +
                         " is too close to pi for a single-valued logarithm");
    }
    return r.v;
  }

  // --------------------------------------------------------------- Ad, Ad*

  Element inverse(const Element& g) const {
    if (kind_ == Kind::SO3) return Element(g.matrix().transpose());
    return Element(g.matrix().inverse());
  }

  Vec Ad(const Element& g, const Vec& X) const {
    return vee(g.matrix() * hat(X) * inverse(g).matrix(), 1e-8);
  }

  AdMat Ad_matrix(const Element& g) const {
    AdMat a;
    const Mat gi = inverse(g).matrix();
    for (int i = 0; i < Dim; ++i) a.col(i) = vee(g.matrix() * basis_[i] * gi, 1e-8);
    return a;
  }

  /// Dual of Ad_g: <Ad*_g p, X> = <p, Ad_g X>.
  Vec Ad_star(const Element& g, const Vec& p) const {
    return Ad_matrix(g).transpose() * p;
  }

  // -------------------------------------------------------- inner products

  double killing_inner(const Vec& X, const Vec& Y) const {
    return -(ad_matrix(X) * ad_matrix(Y)).trace();
  }

  AdMat killing_matrix() const {
    AdMat k;
    for (int i = 0; i < Dim; ++i)
      for (int j = 0; j < Dim; ++j) k(i, j) = killing_inner(Vec::Unit(i), Vec::Unit(j));
    return k;
  }

  /// I(X, Y) for the inner product carried by this group.
  double inner(const Vec& X, const Vec& Y) const { return X.dot(inner_ * Y); }

  Vec metric_raise(const Vec& p) const { return inner_inv_ * p; }
  Vec metric_lower(const Vec& X) const { return inner_ * X; }

  // ---------------------------------------------------- left trivialization

  /// Body-frame coordinates of a tangent vector V at g.
  Vec trivialize(const Element& g, const Mat& V) const {
    return vee(inverse(g).matrix() * V, 1e-8);
  }

  Mat untrivialize(const Element& g, const Vec& X) const { return g.matrix() * hat(X); }

  /// Length of log(g1^-1 g2) in algebra coordinates.
  double distance(const Element& g1, const Element& g2) const {
    if (g1 == g2) return 0.0;
    return log(inverse(g1) * g2).norm();
  }

  // ------------------------------------------------------ membership checks

  /// Deviation of m from the group: for SO(3) the larger of ||m m^T - I||_inf
  /// and |det m - 1|; otherwise 0 for invertible matrices.
  double membership_error(const Mat& m) const {
    if (kind_ == Kind::SO3) {
      const double orth = (m * m.transpose() - Mat::Identity()).cwiseAbs().maxCoeff();
      return std::max(orth, std::abs(m.determinant() - 1.0));
    }
    return std::abs(m.determinant()) > 1e-12 ? 0.0 : std::numeric_limits<double>::infinity();
  }

  Element element(const Mat& m, double tol = 1e-9) const {
    const double err = membership_error(m);
    if (!(err <= tol)) {
      throw OffGroup("matrix is not a group element (deviation " + std::to_string(err) + ")");
    }
    return Element(m);
  }

 private:
  static Mat so3_exp(const Mat& K) {
    // For a skew 3x3 matrix K with K^3 = -theta^2 K.
    const double theta2 = 0.5 * K.squaredNorm();
    const double theta = std::sqrt(theta2);
    double a;
    double b;
    if (theta < kSmallAngle) {
      a = 1.0 - theta2 / 6.0 + theta2 * theta2 / 120.0;
      b = 0.5 - theta2 / 24.0 + theta2 * theta2 / 720.0;
    } else {
      a = std::sin(theta) / theta;
      b = (1.0 - std::cos(theta)) / theta2;
    }
    return Mat::Identity() + a * K + b * (K * K);
  }

  // Coordinates of an exactly skew matrix, skipping the residual check.
  Vec vee_skew(const Mat& A) const {
    const Eigen::Map<const Eigen::Matrix<double, N * N, 1>> x(A.data());
    return pinv_ * x;
  }

  void validate() const {
    for (int k = 0; k < Dim; ++k) {
      const double asym = (structure_[k] + structure_[k].transpose()).cwiseAbs().maxCoeff();
      if (asym > 1e-9) throw InvalidGroupSpec("structure constants are not antisymmetric");
    }
    // Jacobi: [e_i,[e_j,e_l]] + [e_j,[e_l,e_i]] + [e_l,[e_i,e_j]] = 0
    for (int i = 0; i < Dim; ++i)
      for (int j = 0; j < Dim; ++j)
        for (int l = 0; l < Dim; ++l) {
          const Vec ei = Vec::Unit(i), ej = Vec::Unit(j), el = Vec::Unit(l);
          const Vec s = bracket(ei, bracket(ej, el)) + bracket(ej, bracket(el, ei)) +
                        bracket(el, bracket(ei, ej));
          if (s.cwiseAbs().maxCoeff() > 1e-9) {
            throw InvalidGroupSpec("structure constants violate the Jacobi identity");
          }
        }
    if ((inner_ - inner_.transpose()).cwiseAbs().maxCoeff() > 1e-12) {
      throw InvalidGroupSpec("inner product is not symmetric");
    }
    Eigen::LLT<AdMat> llt(inner_);
    if (llt.info() != Eigen::Success) {
      throw InvalidGroupSpec("inner product is not positive definite");
    }
  }

  Kind detect_kind() const {
    if constexpr (Dim == 3 && N == 3) {
      for (const auto& e : basis_) {
        if ((e + e.transpose()).cwiseAbs().maxCoeff() > 1e-12) return Kind::General;
      }
      // Three independent skew 3x3 matrices span so(3). The closed-form
      // exp/log need each basis matrix to have unit "axis length".
      for (const auto& e : basis_) {
        if (std::abs(0.5 * e.squaredNorm() - 1.0) > 1e-12) return Kind::General;
      }
      // ...and the basis to be orthogonal in the Frobenius inner product.
      for (int i = 0; i < Dim; ++i)
        for (int j = i + 1; j < Dim; ++j)
          if (std::abs((basis_[i].array() * basis_[j].array()).sum()) > 1e-12) {
            return Kind::General;
          }
      return Kind::SO3;
    }
    return Kind::General;
  }

  Basis basis_;
  AdMat inner_;
  AdMat inner_inv_;
  Eigen::Matrix<double, N * N, Dim> flat_;
  Eigen::Matrix<double, Dim, N * N> pinv_;
  std::array<AdMat, Dim> structure_{};
  Kind kind_ = Kind::General;
};

using So3 = LieGroup<3, 3>;

/// The so(3) basis with X1 at entry (1,2), X2 at (2,3) and X3 at (1,3):
///   hat(X) = [[0, X1, X3], [-X1, 0, X2], [-X3, -X2, 0]].
/// Brackets: [e1,e2] = e3, [e1,e3] = -e2, [e2,e3] = e1.
inline So3::Basis so3_basis() {
  So3::Basis b;
  for (auto& m : b) m.setZero();
  b[0](0, 1) = 1.0;
  b[0](1, 0) = -1.0;
  b[1](1, 2) = 1.0;
  b[1](2, 1) = -1.0;
  b[2](0, 2) = 1.0;
  b[2](2, 0) = -1.0;
  return b;
}

/// SO(3) with the Killing-form inner product I_B(X,Y) = -tr(ad_X ad_Y).
inline So3 make_so3() {
  // Build once with a placeholder metric to obtain the Killing matrix.
  const So3 probe(so3_basis(), So3::AdMat::Identity());
  return So3(so3_basis(), probe.killing_matrix());
}

}  // namespace liehmp
