#pragma once
#include <array>
#include <cstdint>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace meshgpt::ad {

class TensorError : public std::runtime_error {
 public:
  explicit TensorError(const std::string& what) : std::runtime_error(what) {}
};

// Dense row-major shape, rank <= 4.
struct Shape {
  std::array<int64_t, 4> d = {1, 1, 1, 1};
  int rank = 0;

  Shape() = default;
  Shape(std::initializer_list<int64_t> dims) {
    if (dims.size() > 4) throw TensorError("rank > 4 unsupported");
    rank = int(dims.size());
    int i = 0;
    for (int64_t v : dims) d[i++] = v;
  }

  int64_t numel() const {
    int64_t n = 1;
    for (int i = 0; i < rank; ++i) n *= d[i];
    return n;
  }
  int64_t operator[](int i) const { return d[i]; }
  bool operator==(const Shape& o) const {
    if (rank != o.rank) return false;
    for (int i = 0; i < rank; ++i)
      if (d[i] != o.d[i]) return false;
    return true;
  }
  bool operator!=(const Shape& o) const { return !(*this == o); }

  std::string str() const {
    std::string s = "[";
    for (int i = 0; i < rank; ++i) {
      if (i) s += ", ";
      s += std::to_string(d[i]);
    }
    return s + "]";
  }
};

// Value-semantic handle over shared dense storage. `node` links the tensor to
// a tape when gradients are being recorded; -1 marks a constant.
template <class T>
struct Tensor {
  Shape shape;
  std::shared_ptr<std::vector<T>> data;
  int node = -1;

  Tensor() = default;
  explicit Tensor(Shape s)
      : shape(s), data(std::make_shared<std::vector<T>>(size_t(s.numel()), T(0))) {}

  static Tensor zeros(Shape s) { return Tensor(s); }
  static Tensor full(Shape s, T v) {
    Tensor t(s);
    for (T& x : *t.data) x = v;
    return t;
  }
  static Tensor from(Shape s, std::vector<T> values) {
    if (int64_t(values.size()) != s.numel())
      throw TensorError("from: " + std::to_string(values.size()) +
                        " values for shape " + s.str());
    Tensor t;
    t.shape = s;
    t.data = std::make_shared<std::vector<T>>(std::move(values));
    return t;
  }
  static Tensor scalar(T v) { return from({}, {v}); }

  int64_t numel() const { return shape.numel(); }
  T* ptr() { return data->data(); }
  const T* ptr() const { return data->data(); }
  T& operator[](int64_t i) { return (*data)[size_t(i)]; }
  const T& operator[](int64_t i) const { return (*data)[size_t(i)]; }
  bool defined() const { return data != nullptr; }

  // Deep copy with no tape link.
  Tensor clone() const {
    Tensor t;
    t.shape = shape;
    t.data = std::make_shared<std::vector<T>>(*data);
    return t;
  }

  T item() const {
    if (numel() != 1) throw TensorError("item() on non-scalar " + shape.str());
    return (*data)[0];
  }

  template <class U>
  Tensor<U> cast() const {
    Tensor<U> t;
    t.shape = shape;
    t.data = std::make_shared<std::vector<U>>(data->size());
    for (size_t i = 0; i < data->size(); ++i) (*t.data)[i] = U((*data)[i]);
    return t;
  }
};

// Constant sparse row-mixing matrix in CSR form: y[r] = sum_k w_k x[col_k].
// Covers neighbor-mean aggregation and shared-vertex averaging; the transpose
// is applied on the backward pass.
struct RowMix {
  int rows = 0;
  int cols = 0;
  std::vector<int> offsets;   // rows + 1
  std::vector<int> col;
  std::vector<double> weight;

  static RowMix from_lists(int cols, const std::vector<std::vector<std::pair<int, double>>>& rows_in) {
    RowMix m;
    m.rows = int(rows_in.size());
    m.cols = cols;
    m.offsets.push_back(0);
    for (const auto& r : rows_in) {
      for (const auto& [c, w] : r) {
        m.col.push_back(c);
        m.weight.push_back(w);
      }
      m.offsets.push_back(int(m.col.size()));
    }
    return m;
  }
};

}  // namespace meshgpt::ad
