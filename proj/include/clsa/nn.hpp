#pragma once

// Layers with explicit forward/backward passes. Activations are laid out
// feature-major: a batch of B vectors of width n is an n x B matrix.

#include "clsa/common.hpp"

#include <string>
#include <vector>

namespace clsa::nn {

struct Parameter {
  std::string name;  // "module/layer/tensor"
  Matrix value;
  Matrix grad;
  bool trainable = true;

  void zero_grad() { grad.setZero(value.rows(), value.cols()); }
};

using ParameterList = std::vector<Parameter*>;

// Activation helpers.
Matrix sigmoid(const Matrix& a);
Matrix relu(const Matrix& a);
Matrix relu_mask(const Matrix& a);  // 1 where a > 0
Matrix elu(const Matrix& a);
Matrix elu_grad(const Matrix& a);
// Column-wise softmax (each column is one sample).
Matrix softmax_columns(const Matrix& logits);

void glorot_uniform(Matrix& w, Rng& rng);
void orthogonal(Matrix& w, Rng& rng);

class Dense {
 public:
  Dense() = default;
  Dense(const std::string& name, int in, int out);

  void init(Rng& rng);
  Matrix forward(const Matrix& x) const;
  // Accumulates weight/bias grads; returns dL/dx.
  Matrix backward(const Matrix& x, const Matrix& dy);
  void collect(ParameterList& out) { out.push_back(&weight); out.push_back(&bias); }

  int in_dim() const { return static_cast<int>(weight.value.cols()); }
  int out_dim() const { return static_cast<int>(weight.value.rows()); }

  Parameter weight;
  Parameter bias;
};

class BatchNorm {
 public:
  struct Cache {
    Matrix xhat;
    Vector inv_std;
    Vector mean, var;
    bool batch_stats = false;
  };

  BatchNorm() = default;
  BatchNorm(const std::string& name, int dim);

  // Batch statistics when `training`; running averages otherwise.
  Matrix forward(const Matrix& x, bool training, Cache& cache) const;
  // Moves running averages toward the batch statistics held in `cache`.
  void update_running(const Cache& cache);
  Matrix backward(const Cache& cache, const Matrix& dy);
  void collect(ParameterList& out) {
    out.push_back(&gamma);
    out.push_back(&beta);
    out.push_back(&running_mean);
    out.push_back(&running_var);
  }

  Parameter gamma;
  Parameter beta;
  Parameter running_mean;  // non-trainable
  Parameter running_var;   // non-trainable
  double momentum = 0.9;
  double epsilon = 1e-5;
};

// LSTM with sigmoid gates and ReLU candidate/output activation.
// Gate blocks in W, U, b are ordered (input, forget, candidate, output).
class LstmEncoder {
 public:
  struct Trace {
    std::vector<Matrix> x, i, f, g, o, c, h, g_pre;
    int steps() const { return static_cast<int>(h.size()); }
  };

  LstmEncoder() = default;
  LstmEncoder(const std::string& name, int input_dim, int hidden_dim);

  void init(Rng& rng);
  // xs[k] is input_dim x B. Fills trace; trace.h[k] is hidden x B.
  void forward(const std::vector<Matrix>& xs, Trace& trace) const;
  // dh[k] is the external gradient on h_k (empty matrix = none).
  void backward(const Trace& trace, const std::vector<Matrix>& dh);
  void collect(ParameterList& out) {
    out.push_back(&W);
    out.push_back(&U);
    out.push_back(&b);
  }

  int hidden_dim() const { return hidden_; }
  int input_dim() const { return static_cast<int>(W.value.cols()); }

  Parameter W, U, b;

 private:
  int hidden_ = 0;
};

// Time-aware LSTM with two time gates. T1 gates the candidate written into
// the output-facing cell, T2 the candidate written into the carried cell.
// T1's gap weight is kept non-positive so its gate never grows with the gap.
// Input-side blocks in Wx/b: (input, forget, candidate, output, T1, T2);
// recurrent blocks in Uh: (input, forget, candidate, output).
class TimeLstm2 {
 public:
  struct Trace {
    std::vector<Matrix> x, i, f, g, o, t1, t2, s1, s2, c, c_out, h;
    std::vector<RowVector> dt;
    int steps() const { return static_cast<int>(h.size()); }
  };

  TimeLstm2() = default;
  TimeLstm2(const std::string& name, int input_dim, int hidden_dim);

  void init(Rng& rng);
  // dts[k] is a 1 x B row of non-negative gaps.
  void forward(const std::vector<Matrix>& xs, const std::vector<RowVector>& dts,
               Trace& trace) const;
  // dh[k]: external gradient on h_k. Returns dL/dx_k per step.
  std::vector<Matrix> backward(const Trace& trace, const std::vector<Matrix>& dh);
  void clamp_time_weight();
  void collect(ParameterList& out) {
    out.push_back(&Wx);
    out.push_back(&Uh);
    out.push_back(&b);
    out.push_back(&w_t1);
    out.push_back(&w_t2);
    out.push_back(&w_to);
  }

  int hidden_dim() const { return hidden_; }

  Parameter Wx, Uh, b;
  Parameter w_t1, w_t2, w_to;  // hidden x 1

 private:
  int hidden_ = 0;
};

}  // namespace clsa::nn
