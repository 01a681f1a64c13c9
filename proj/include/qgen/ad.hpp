#pragma once

// Reverse-mode autodiff on a flat tape of Eigen matrices. Values are computed
// eagerly at node creation; backward() walks the tape once in reverse and
// accumulates into Param::grad. Vectors are n-by-1 matrices, scalars 1-by-1.

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

namespace qgen::ad {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

// A trainable tensor. Lives outside any graph; grad is accumulated by
// Graph::backward and consumed/cleared by the optimizer.
struct Param {
  std::string name;
  Mat value;
  Mat grad;
  Mat adam_m, adam_v;

  int rows() const { return static_cast<int>(value.rows()); }
  int cols() const { return static_cast<int>(value.cols()); }
  void zero_grad() { grad.setZero(); }
};

enum class Op : uint8_t {
  Input,
  ParamRef,
  Lookup,       // row of a table param, as a column vector
  MatVec,       // A * x
  MatVecT,      // A^T * x
  Affine,       // W*x + b
  Affine2,      // W*x + U*h + b
  Add,
  AddN,
  Sub,
  CMult,
  Scale,        // c * x
  OneMinus,     // 1 - x
  Sigmoid,
  Tanh,
  Relu,
  Exp,
  Log,
  Square,
  Softmax,      // column vector
  LogSoftmax,
  ConcatRows,   // stack column vectors into one long column
  ConcatCols,   // column vectors into an n-by-k matrix
  Sum,          // scalar
  Dot,          // scalar
  Pick,         // element -> scalar
  PickNegLogSoftmax,  // -log softmax(x)[i], fused
  Dropout,
};

struct Node {
  explicit Node(Op o) : op(o) {}
  Op op;
  Mat val;        // empty for ParamRef (value lives in the param)
  Mat aux;        // dropout mask
  Param* param = nullptr;
  int a0 = -1, a1 = -1;
  int argv_off = 0, argv_len = 0;  // variadic args (AddN, Concat*, Affine*)
  int index = -1;                  // Lookup row / Pick index
  double c = 0.0;                  // Scale factor
};

class Graph {
 public:
  Graph() { nodes_.reserve(1024); }

  int input(Mat v);
  int input(const Vec& v) { return input(Mat(v)); }
  int scalar_input(double v);
  int param(Param& p);
  int lookup(Param& table, int row);

  int matvec(int a, int x);
  int matvec_t(int a, int x);
  int affine(int w, int x, int b);
  int affine2(int w, int x, int u, int h, int b);
  int add(int a, int b);
  int addn(const std::vector<int>& xs);
  int sub(int a, int b);
  int cmult(int a, int b);
  int scale(int a, double c);
  int one_minus(int a);
  int sigmoid(int a);
  int tanh(int a);
  int relu(int a);
  int exp(int a);
  int log(int a);
  int square(int a);
  int softmax(int a);
  int log_softmax(int a);
  int concat(const std::vector<int>& xs);
  int concat_cols(const std::vector<int>& xs);
  int sum(int a);
  int dot(int a, int b);
  int pick(int a, int i);
  int pick_neg_log_softmax(int a, int i);
  int dropout(int a, double rate, std::mt19937_64& rng);

  const Mat& value(int i) const;
  double scalar(int i) const;
  size_t size() const { return nodes_.size(); }

  // Accumulates d(loss)/d(param) into every referenced Param::grad.
  // `loss` must be a 1x1 node.
  void backward(int loss);

  void clear();

 private:
  int push(Node n);
  const Mat& V(int i) const;
  int argv_store(const std::vector<int>& xs);

  std::vector<Node> nodes_;
  std::vector<int> argv_;
  std::vector<std::pair<Param*, int>> param_refs_;  // param -> node index
};

// Central finite differences of f() w.r.t. every entry of `p.value`.
Mat finite_difference(Param& p, const std::function<double()>& f, double h = 1e-4);

}  // namespace qgen::ad
