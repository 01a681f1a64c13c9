#include "qgen/ad.hpp"

#include "qgen/io.hpp"

#include <cmath>
#include <functional>

namespace qgen::ad {

namespace {

void require(bool ok, const char* msg) {
  if (!ok) throw Error(ErrCat::Runtime, std::string("graph: ") + msg);
}

Mat softmax_of(const Mat& x) {
  double mx = x.maxCoeff();
  Mat e = (x.array() - mx).exp();
  return e / e.sum();
}

}  // namespace

int Graph::push(Node n) {
  nodes_.push_back(std::move(n));
  return static_cast<int>(nodes_.size()) - 1;
}

int Graph::argv_store(const std::vector<int>& xs) {
  int off = static_cast<int>(argv_.size());
  argv_.insert(argv_.end(), xs.begin(), xs.end());
  return off;
}

const Mat& Graph::V(int i) const {
  const Node& n = nodes_[static_cast<size_t>(i)];
  return n.op == Op::ParamRef ? n.param->value : n.val;
}

const Mat& Graph::value(int i) const { return V(i); }

double Graph::scalar(int i) const {
  const Mat& m = V(i);
  require(m.size() == 1, "scalar() on non-scalar node");
  return m(0, 0);
}

int Graph::input(Mat v) {
  Node n{Op::Input};
  n.val = std::move(v);
  return push(std::move(n));
}

int Graph::scalar_input(double v) {
  Mat m(1, 1);
  m(0, 0) = v;
  return input(std::move(m));
}

int Graph::param(Param& p) {
  for (auto& [pp, idx] : param_refs_)
    if (pp == &p) return idx;
  Node n{Op::ParamRef};
  n.param = &p;
  int idx = push(std::move(n));
  param_refs_.emplace_back(&p, idx);
  return idx;
}

int Graph::lookup(Param& table, int row) {
  require(row >= 0 && row < table.rows(), "lookup row out of range");
  Node n{Op::Lookup};
  n.param = &table;
  n.index = row;
  n.val = table.value.row(row).transpose();
  return push(std::move(n));
}

int Graph::matvec(int a, int x) {
  require(V(a).cols() == V(x).rows() && V(x).cols() == 1, "matvec shape");
  Node n{Op::MatVec};
  n.a0 = a;
  n.a1 = x;
  n.val.noalias() = V(a) * V(x);
  return push(std::move(n));
}

int Graph::matvec_t(int a, int x) {
  require(V(a).rows() == V(x).rows() && V(x).cols() == 1, "matvec_t shape");
  Node n{Op::MatVecT};
  n.a0 = a;
  n.a1 = x;
  n.val.noalias() = V(a).transpose() * V(x);
  return push(std::move(n));
}

int Graph::affine(int w, int x, int b) {
  require(V(w).cols() == V(x).rows() && V(w).rows() == V(b).rows(), "affine shape");
  Node n{Op::Affine};
  n.argv_off = argv_store({w, x, b});
  n.argv_len = 3;
  n.val.noalias() = V(w) * V(x);
  n.val += V(b);
  return push(std::move(n));
}

int Graph::affine2(int w, int x, int u, int h, int b) {
  require(V(w).cols() == V(x).rows() && V(u).cols() == V(h).rows(), "affine2 shape");
  require(V(w).rows() == V(u).rows() && V(w).rows() == V(b).rows(), "affine2 out shape");
  Node n{Op::Affine2};
  n.argv_off = argv_store({w, x, u, h, b});
  n.argv_len = 5;
  n.val.noalias() = V(w) * V(x);
  n.val.noalias() += V(u) * V(h);
  n.val += V(b);
  return push(std::move(n));
}

int Graph::add(int a, int b) {
  require(V(a).rows() == V(b).rows() && V(a).cols() == V(b).cols(), "add shape");
  Node n{Op::Add};
  n.a0 = a;
  n.a1 = b;
  n.val = V(a) + V(b);
  return push(std::move(n));
}

int Graph::addn(const std::vector<int>& xs) {
  require(!xs.empty(), "addn empty");
  Node n{Op::AddN};
  n.argv_off = argv_store(xs);
  n.argv_len = static_cast<int>(xs.size());
  n.val = V(xs[0]);
  for (size_t i = 1; i < xs.size(); ++i) n.val += V(xs[i]);
  return push(std::move(n));
}

int Graph::sub(int a, int b) {
  require(V(a).rows() == V(b).rows() && V(a).cols() == V(b).cols(), "sub shape");
  Node n{Op::Sub};
  n.a0 = a;
  n.a1 = b;
  n.val = V(a) - V(b);
  return push(std::move(n));
}

int Graph::cmult(int a, int b) {
  require(V(a).rows() == V(b).rows() && V(a).cols() == V(b).cols(), "cmult shape");
  Node n{Op::CMult};
  n.a0 = a;
  n.a1 = b;
  n.val = V(a).cwiseProduct(V(b));
  return push(std::move(n));
}

int Graph::scale(int a, double c) {
  Node n{Op::Scale};
  n.a0 = a;
  n.c = c;
  n.val = V(a) * c;
  return push(std::move(n));
}

int Graph::one_minus(int a) {
  Node n{Op::OneMinus};
  n.a0 = a;
  n.val = (1.0 - V(a).array()).matrix();
  return push(std::move(n));
}

int Graph::sigmoid(int a) {
  Node n{Op::Sigmoid};
  n.a0 = a;
  n.val = (1.0 / (1.0 + (-V(a).array()).exp())).matrix();
  return push(std::move(n));
}

int Graph::tanh(int a) {
  Node n{Op::Tanh};
  n.a0 = a;
  n.val = V(a).array().tanh().matrix();
  return push(std::move(n));
}

int Graph::relu(int a) {
  Node n{Op::Relu};
  n.a0 = a;
  n.val = V(a).cwiseMax(0.0);
  return push(std::move(n));
}

int Graph::exp(int a) {
  Node n{Op::Exp};
  n.a0 = a;
  n.val = V(a).array().exp().matrix();
  return push(std::move(n));
}

int Graph::log(int a) {
  Node n{Op::Log};
  n.a0 = a;
  n.val = V(a).array().log().matrix();
  return push(std::move(n));
}

int Graph::square(int a) {
  Node n{Op::Square};
  n.a0 = a;
  n.val = V(a).cwiseProduct(V(a));
  return push(std::move(n));
}

int Graph::softmax(int a) {
  require(V(a).cols() == 1, "softmax expects a column vector");
  Node n{Op::Softmax};
  n.a0 = a;
  n.val = softmax_of(V(a));
  return push(std::move(n));
}

int Graph::log_softmax(int a) {
  require(V(a).cols() == 1, "log_softmax expects a column vector");
  Node n{Op::LogSoftmax};
  n.a0 = a;
  const Mat& x = V(a);
  double mx = x.maxCoeff();
  double lse = mx + std::log((x.array() - mx).exp().sum());
  n.val = (x.array() - lse).matrix();
  return push(std::move(n));
}

int Graph::concat(const std::vector<int>& xs) {
  require(!xs.empty(), "concat empty");
  Node n{Op::ConcatRows};
  n.argv_off = argv_store(xs);
  n.argv_len = static_cast<int>(xs.size());
  Eigen::Index total = 0;
  for (int x : xs) {
    require(V(x).cols() == 1, "concat expects column vectors");
    total += V(x).rows();
  }
  n.val.resize(total, 1);
  Eigen::Index at = 0;
  for (int x : xs) {
    n.val.block(at, 0, V(x).rows(), 1) = V(x);
    at += V(x).rows();
  }
  return push(std::move(n));
}

int Graph::concat_cols(const std::vector<int>& xs) {
  require(!xs.empty(), "concat_cols empty");
  Node n{Op::ConcatCols};
  n.argv_off = argv_store(xs);
  n.argv_len = static_cast<int>(xs.size());
  Eigen::Index rows = V(xs[0]).rows();
  n.val.resize(rows, static_cast<Eigen::Index>(xs.size()));
  for (size_t i = 0; i < xs.size(); ++i) {
    require(V(xs[i]).rows() == rows && V(xs[i]).cols() == 1, "concat_cols shape");
    n.val.col(static_cast<Eigen::Index>(i)) = V(xs[i]);
  }
  return push(std::move(n));
}

int Graph::sum(int a) {
  Node n{Op::Sum};
  n.a0 = a;
  n.val.resize(1, 1);
  n.val(0, 0) = V(a).sum();
  return push(std::move(n));
}

int Graph::dot(int a, int b) {
  require(V(a).rows() == V(b).rows() && V(a).cols() == 1 && V(b).cols() == 1, "dot shape");
  Node n{Op::Dot};
  n.a0 = a;
  n.a1 = b;
  n.val.resize(1, 1);
  n.val(0, 0) = V(a).col(0).dot(V(b).col(0));
  return push(std::move(n));
}

int Graph::pick(int a, int i) {
  require(V(a).cols() == 1 && i >= 0 && i < V(a).rows(), "pick index");
  Node n{Op::Pick};
  n.a0 = a;
  n.index = i;
  n.val.resize(1, 1);
  n.val(0, 0) = V(a)(i, 0);
  return push(std::move(n));
}

int Graph::pick_neg_log_softmax(int a, int i) {
  require(V(a).cols() == 1 && i >= 0 && i < V(a).rows(), "pick_nls index");
  Node n{Op::PickNegLogSoftmax};
  n.a0 = a;
  n.index = i;
  const Mat& x = V(a);
  double mx = x.maxCoeff();
  double lse = mx + std::log((x.array() - mx).exp().sum());
  n.val.resize(1, 1);
  n.val(0, 0) = lse - x(i, 0);
  return push(std::move(n));
}

int Graph::dropout(int a, double rate, std::mt19937_64& rng) {
  require(rate >= 0.0 && rate < 1.0, "dropout rate");
  if (rate == 0.0) return a;
  Node n{Op::Dropout};
  n.a0 = a;
  std::bernoulli_distribution keep(1.0 - rate);
  n.aux.resize(V(a).rows(), V(a).cols());
  double s = 1.0 / (1.0 - rate);
  for (Eigen::Index j = 0; j < n.aux.cols(); ++j)
    for (Eigen::Index i = 0; i < n.aux.rows(); ++i) n.aux(i, j) = keep(rng) ? s : 0.0;
  n.val = V(a).cwiseProduct(n.aux);
  return push(std::move(n));
}

void Graph::backward(int loss) {
  require(loss >= 0 && loss < static_cast<int>(nodes_.size()), "backward: bad node");
  require(V(loss).size() == 1, "backward: loss must be scalar");

  size_t n = nodes_.size();
  std::vector<char> reach(n, 0);
  reach[static_cast<size_t>(loss)] = 1;
  for (int i = loss; i >= 0; --i) {
    if (!reach[static_cast<size_t>(i)]) continue;
    const Node& nd = nodes_[static_cast<size_t>(i)];
    if (nd.a0 >= 0) reach[static_cast<size_t>(nd.a0)] = 1;
    if (nd.a1 >= 0) reach[static_cast<size_t>(nd.a1)] = 1;
    for (int k = 0; k < nd.argv_len; ++k)
      reach[static_cast<size_t>(argv_[static_cast<size_t>(nd.argv_off + k)])] = 1;
  }

  std::vector<Mat> grads(n);
  auto g = [&](int i) -> Mat& {
    Mat& m = grads[static_cast<size_t>(i)];
    if (m.size() == 0) m = Mat::Zero(V(i).rows(), V(i).cols());
    return m;
  };
  g(loss)(0, 0) = 1.0;

  for (int i = loss; i >= 0; --i) {
    if (!reach[static_cast<size_t>(i)]) continue;
    Node& nd = nodes_[static_cast<size_t>(i)];
    const Mat& dy = g(i);
    if (dy.size() == 0) continue;
    switch (nd.op) {
      case Op::Input:
        break;
      case Op::ParamRef:
        nd.param->grad += dy;
        break;
      case Op::Lookup:
        nd.param->grad.row(nd.index) += dy.transpose();
        break;
      case Op::MatVec:
        g(nd.a0).noalias() += dy * V(nd.a1).transpose();
        g(nd.a1).noalias() += V(nd.a0).transpose() * dy;
        break;
      case Op::MatVecT:
        g(nd.a0).noalias() += V(nd.a1) * dy.transpose();
        g(nd.a1).noalias() += V(nd.a0) * dy;
        break;
      case Op::Affine: {
        int w = argv_[static_cast<size_t>(nd.argv_off)];
        int x = argv_[static_cast<size_t>(nd.argv_off + 1)];
        int b = argv_[static_cast<size_t>(nd.argv_off + 2)];
        g(w).noalias() += dy * V(x).transpose();
        g(x).noalias() += V(w).transpose() * dy;
        g(b) += dy;
        break;
      }
      case Op::Affine2: {
        int w = argv_[static_cast<size_t>(nd.argv_off)];
        int x = argv_[static_cast<size_t>(nd.argv_off + 1)];
        int u = argv_[static_cast<size_t>(nd.argv_off + 2)];
        int h = argv_[static_cast<size_t>(nd.argv_off + 3)];
        int b = argv_[static_cast<size_t>(nd.argv_off + 4)];
        g(w).noalias() += dy * V(x).transpose();
        g(x).noalias() += V(w).transpose() * dy;
        g(u).noalias() += dy * V(h).transpose();
        g(h).noalias() += V(u).transpose() * dy;
        g(b) += dy;
        break;
      }
      case Op::Add:
        g(nd.a0) += dy;
        g(nd.a1) += dy;
        break;
      case Op::AddN:
        for (int k = 0; k < nd.argv_len; ++k)
          g(argv_[static_cast<size_t>(nd.argv_off + k)]) += dy;
        break;
      case Op::Sub:
        g(nd.a0) += dy;
        g(nd.a1) -= dy;
        break;
      case Op::CMult:
        g(nd.a0) += dy.cwiseProduct(V(nd.a1));
        g(nd.a1) += dy.cwiseProduct(V(nd.a0));
        break;
      case Op::Scale:
        g(nd.a0) += dy * nd.c;
        break;
      case Op::OneMinus:
        g(nd.a0) -= dy;
        break;
      case Op::Sigmoid:
        g(nd.a0) += dy.cwiseProduct(nd.val.cwiseProduct((1.0 - nd.val.array()).matrix()));
        break;
      case Op::Tanh:
        g(nd.a0) += dy.cwiseProduct((1.0 - nd.val.array().square()).matrix());
        break;
      case Op::Relu:
        g(nd.a0) += dy.cwiseProduct((V(nd.a0).array() > 0.0).cast<double>().matrix());
        break;
      case Op::Exp:
        g(nd.a0) += dy.cwiseProduct(nd.val);
        break;
      case Op::Log:
        g(nd.a0) += dy.cwiseQuotient(V(nd.a0));
        break;
      case Op::Square:
        g(nd.a0) += 2.0 * dy.cwiseProduct(V(nd.a0));
        break;
      case Op::Softmax: {
        double s = dy.cwiseProduct(nd.val).sum();
        g(nd.a0) += nd.val.cwiseProduct((dy.array() - s).matrix());
        break;
      }
      case Op::LogSoftmax: {
        double s = dy.sum();
        g(nd.a0) += dy - s * nd.val.array().exp().matrix();
        break;
      }
      case Op::ConcatRows: {
        Eigen::Index at = 0;
        for (int k = 0; k < nd.argv_len; ++k) {
          int x = argv_[static_cast<size_t>(nd.argv_off + k)];
          g(x) += dy.block(at, 0, V(x).rows(), 1);
          at += V(x).rows();
        }
        break;
      }
      case Op::ConcatCols:
        for (int k = 0; k < nd.argv_len; ++k)
          g(argv_[static_cast<size_t>(nd.argv_off + k)]) += dy.col(k);
        break;
      case Op::Sum:
        g(nd.a0).array() += dy(0, 0);
        break;
      case Op::Dot:
        g(nd.a0) += dy(0, 0) * V(nd.a1);
        g(nd.a1) += dy(0, 0) * V(nd.a0);
        break;
      case Op::Pick:
        g(nd.a0)(nd.index, 0) += dy(0, 0);
        break;
      case Op::PickNegLogSoftmax: {
        Mat sm = softmax_of(V(nd.a0));
        g(nd.a0) += dy(0, 0) * sm;
        g(nd.a0)(nd.index, 0) -= dy(0, 0);
        break;
      }
      case Op::Dropout:
        g(nd.a0) += dy.cwiseProduct(nd.aux);
        break;
    }
  }
}

void Graph::clear() {
  nodes_.clear();
  argv_.clear();
  param_refs_.clear();
}

Mat finite_difference(Param& p, const std::function<double()>& f, double h) {
  Mat out(p.value.rows(), p.value.cols());
  for (Eigen::Index j = 0; j < p.value.cols(); ++j) {
    for (Eigen::Index i = 0; i < p.value.rows(); ++i) {
      double orig = p.value(i, j);
      p.value(i, j) = orig + h;
      double hi = f();
      p.value(i, j) = orig - h;
      double lo = f();
      p.value(i, j) = orig;
      out(i, j) = (hi - lo) / (2.0 * h);
    }
  }
  return out;
}

}  // namespace qgen::ad
