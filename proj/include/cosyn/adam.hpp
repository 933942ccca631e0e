#pragma once

#include <cstdint>
#include <istream>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "cosyn/autodiff.hpp"

namespace cosyn {

struct OptimizerConfig {
  double beta1 = 0.5;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double gen_lr = 1e-4;
  double disc_lr = 5e-5;
  double lr_decay = 0.999;  // multiplicative, per epoch
  int batch_size = 256;
  int epochs = 1000;
  double phoneme_lr = 1e-3;
  int phoneme_batch_size = 1024;
  int phoneme_epochs = 500;
};

class Adam {
 public:
  Adam(double beta1 = 0.5, double beta2 = 0.999, double eps = 1e-8)
      : beta1_(beta1), beta2_(beta2), eps_(eps) {}

  // Applies one update from the gradients currently held by the store.
  void step(ad::ParamStore& ps, double lr) {
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, t_);
    const double bc2 = 1.0 - std::pow(beta2_, t_);
    for (auto& [name, p] : ps.params) {
      auto& [m, v] = moments_[name];
      const Mat& g = p.grad();
      if (g.size() == 0) continue;
      if (m.size() == 0) {
        m = Mat::Zero(g.rows(), g.cols());
        v = Mat::Zero(g.rows(), g.cols());
      }
      m = beta1_ * m + (1.0 - beta1_) * g;
      v = beta2_ * v + (1.0 - beta2_) * g.cwiseProduct(g);
      const Mat mhat = m / bc1;
      const Mat vhat = v / bc2;
      p.mutable_val() -=
          lr * mhat.cwiseQuotient((vhat.cwiseSqrt().array() + eps_).matrix());
    }
  }

  // Step counter + moment serialization, so a resumed run continues the exact
  // update sequence of an uninterrupted one.
  void save_state(std::ostream& f) const {
    const int64_t t = t_;
    f.write(reinterpret_cast<const char*>(&t), 8);
    const int32_t n = static_cast<int32_t>(moments_.size());
    f.write(reinterpret_cast<const char*>(&n), 4);
    for (const auto& [name, mv] : moments_) {
      const int32_t len = static_cast<int32_t>(name.size());
      f.write(reinterpret_cast<const char*>(&len), 4);
      f.write(name.data(), len);
      for (const Mat* m : {&mv.first, &mv.second}) {
        const int32_t r = static_cast<int32_t>(m->rows()), c = static_cast<int32_t>(m->cols());
        f.write(reinterpret_cast<const char*>(&r), 4);
        f.write(reinterpret_cast<const char*>(&c), 4);
        for (int i = 0; i < r; ++i)
          f.write(reinterpret_cast<const char*>(m->row(i).eval().data()),
                  static_cast<std::streamsize>(c) * 8);
      }
    }
  }

  void load_state(std::istream& f) {
    int64_t t = 0;
    f.read(reinterpret_cast<char*>(&t), 8);
    t_ = static_cast<long>(t);
    int32_t n = 0;
    f.read(reinterpret_cast<char*>(&n), 4);
    moments_.clear();
    for (int32_t i = 0; i < n; ++i) {
      int32_t len = 0;
      f.read(reinterpret_cast<char*>(&len), 4);
      std::string name(static_cast<size_t>(len), '\0');
      f.read(name.data(), len);
      auto& mv = moments_[name];
      for (Mat* m : {&mv.first, &mv.second}) {
        int32_t r = 0, c = 0;
        f.read(reinterpret_cast<char*>(&r), 4);
        f.read(reinterpret_cast<char*>(&c), 4);
        m->resize(r, c);
        std::vector<double> row(static_cast<size_t>(c));
        for (int32_t rr = 0; rr < r; ++rr) {
          f.read(reinterpret_cast<char*>(row.data()), static_cast<std::streamsize>(c) * 8);
          for (int32_t cc = 0; cc < c; ++cc) (*m)(rr, cc) = row[static_cast<size_t>(cc)];
        }
      }
    }
  }

 private:
  double beta1_, beta2_, eps_;
  long t_ = 0;
  std::map<std::string, std::pair<Mat, Mat>> moments_;
};

}  // namespace cosyn
