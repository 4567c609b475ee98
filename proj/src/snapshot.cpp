// Snapshot layout, all integers and IEEE-754 doubles little-endian:
//
//   "MSPR" | u16 version | u64 payload length | payload
//
// payload:
//   f64 alpha | u8 metric | u64 arms | u64 batch_interval | u64 burn_in
//   u8 sigma_mode | u8 keep_history
//   prior: u8 scale | u64 dimension | u64 components
//          per component: f64 weight | dim x f64 mean | dim*dim x f64 cov (row-major)
//   stats: u8 layout | per arm: u64 n | u64 successes | f64 sum | f64 sumsq
//                               | u64 count | count x f64 values (ascending)
//   state: u64 n | u64 pending | u64 evaluations | f64 log_lambda_max
//          | f64 last_log_lambda | u8 decision
//   history: u64 length | per entry: u64 n | f64 log_lambda | f64 p | u8 decision | u8 deferred

#include <algorithm>
#include <cmath>
#include <array>
#include <bit>
#include <cstring>
#include <string>

#include "msprt/engine.hpp"

namespace msprt {

namespace {

constexpr std::array<std::uint8_t, 4> kMagic{'M', 'S', 'P', 'R'};
constexpr std::uint16_t kVersion = 1;
constexpr std::size_t kHeaderSize = 4 + 2 + 8;

class Writer {
 public:
  void u8(std::uint8_t v) { out_.push_back(v); }
  void u16(std::uint16_t v) { le(v, 2); }
  void u64(std::uint64_t v) { le(v, 8); }
  void f64(double v) { le(std::bit_cast<std::uint64_t>(v), 8); }
  std::vector<std::uint8_t>& bytes() { return out_; }

 private:
  void le(std::uint64_t v, int width) {
    for (int i = 0; i < width; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> in) : in_(in) {}

  std::uint8_t u8() { return static_cast<std::uint8_t>(le(1)); }
  std::uint16_t u16() { return static_cast<std::uint16_t>(le(2)); }
  std::uint64_t u64() { return le(8); }
  double f64() { return std::bit_cast<double>(le(8)); }

  /// Bounds a count before it sizes an allocation.
  std::uint64_t count(std::uint64_t element_size) {
    const std::uint64_t n = u64();
    if (element_size > 0 && n > remaining() / element_size) {
      throw CorruptSnapshotError("snapshot: element count exceeds remaining bytes");
    }
    return n;
  }
  std::size_t remaining() const { return in_.size() - pos_; }

 private:
  std::uint64_t le(int width) {
    if (remaining() < static_cast<std::size_t>(width)) {
      throw CorruptSnapshotError("snapshot: truncated");
    }
    std::uint64_t v = 0;
    for (int i = 0; i < width; ++i) v |= static_cast<std::uint64_t>(in_[pos_ + i]) << (8 * i);
    pos_ += static_cast<std::size_t>(width);
    return v;
  }
  std::span<const std::uint8_t> in_;
  std::size_t pos_ = 0;
};

template <typename E>
E enum_at(Reader& r, std::uint8_t max_value, const char* what) {
  const std::uint8_t v = r.u8();
  if (v > max_value) {
    throw CorruptSnapshotError(std::string("snapshot: invalid ") + what);
  }
  return static_cast<E>(v);
}

}  // namespace

std::vector<std::uint8_t> SequentialTest::snapshot() const {
  Writer w;
  const auto& c = config_;
  w.f64(c.alpha);
  w.u8(static_cast<std::uint8_t>(c.metric));
  w.u64(c.arms);
  w.u64(c.batch_interval);
  w.u64(c.burn_in);
  w.u8(static_cast<std::uint8_t>(c.sigma_mode));
  w.u8(c.keep_history ? 1 : 0);

  w.u8(static_cast<std::uint8_t>(c.prior.scale));
  w.u64(static_cast<std::uint64_t>(c.prior.dimension));
  w.u64(c.prior.components.size());
  for (const auto& comp : c.prior.components) {
    w.f64(comp.weight);
    for (Eigen::Index i = 0; i < comp.mean.size(); ++i) w.f64(comp.mean(i));
    for (Eigen::Index i = 0; i < comp.cov.rows(); ++i) {
      for (Eigen::Index k = 0; k < comp.cov.cols(); ++k) w.f64(comp.cov(i, k));
    }
  }

  w.u8(static_cast<std::uint8_t>(stats_.layout()));
  for (std::size_t j = 0; j < stats_.arms(); ++j) {
    const auto& a = stats_.arm(j);
    w.u64(a.n);
    w.u64(a.successes);
    w.f64(a.sum);
    w.f64(a.sumsq);
    const std::vector<double> values = stats_.sorted_values(j);
    w.u64(values.size());
    for (double v : values) w.f64(v);
  }

  w.u64(n_);
  w.u64(pending_);
  w.u64(evaluations_);
  w.f64(log_lambda_max_);
  w.f64(last_log_lambda_);
  w.u8(static_cast<std::uint8_t>(decision_));

  w.u64(history_.size());
  for (const auto& e : history_) {
    w.u64(e.n);
    w.f64(e.log_lambda);
    w.f64(e.p_value);
    w.u8(static_cast<std::uint8_t>(e.decision));
    w.u8(e.deferred ? 1 : 0);
  }

  Writer framed;
  for (std::uint8_t b : kMagic) framed.u8(b);
  framed.u16(kVersion);
  framed.u64(w.bytes().size());
  auto out = std::move(framed.bytes());
  out.insert(out.end(), w.bytes().begin(), w.bytes().end());
  return out;
}

SequentialTest SequentialTest::restore(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kHeaderSize || std::memcmp(bytes.data(), kMagic.data(), 4) != 0) {
    throw CorruptSnapshotError("snapshot: missing MSPR header");
  }
  Reader header(bytes.subspan(4, 10));
  const std::uint16_t version = header.u16();
  if (version != kVersion) {
    throw CorruptSnapshotError("snapshot: unsupported format version " + std::to_string(version));
  }
  const std::uint64_t length = header.u64();
  if (length != bytes.size() - kHeaderSize) {
    throw CorruptSnapshotError("snapshot: payload length mismatch");
  }
  Reader r(bytes.subspan(kHeaderSize));

  TestConfig c;
  c.alpha = r.f64();
  c.metric = enum_at<Metric>(r, static_cast<std::uint8_t>(Metric::auc), "metric");
  c.arms = r.u64();
  c.batch_interval = r.u64();
  c.burn_in = r.u64();
  c.sigma_mode = enum_at<SigmaMode>(r, 2, "sigma mode");
  c.keep_history = r.u8() != 0;

  c.prior.scale = enum_at<PriorScale>(r, 1, "prior scale");
  const std::uint64_t dim = r.u64();
  if (c.arms < 2 || c.arms > (1u << 16) || dim != c.arms - 1) {
    throw CorruptSnapshotError("snapshot: inconsistent arm count");
  }
  const std::uint64_t ncomp = r.count(8 * (1 + dim + dim * dim));
  c.prior.dimension = static_cast<Eigen::Index>(dim);
  const auto d = static_cast<Eigen::Index>(dim);
  for (std::uint64_t i = 0; i < ncomp; ++i) {
    MixtureComponent<double> comp;
    comp.weight = r.f64();
    comp.mean.resize(d);
    for (Eigen::Index k = 0; k < d; ++k) comp.mean(k) = r.f64();
    comp.cov.resize(d, d);
    for (Eigen::Index a = 0; a < d; ++a) {
      for (Eigen::Index b = 0; b < d; ++b) comp.cov(a, b) = r.f64();
    }
    c.prior.components.push_back(std::move(comp));
  }

  const auto layout = enum_at<StatsLayout>(r, 2, "stats layout");
  if (layout != layout_for(c.metric)) {
    throw CorruptSnapshotError("snapshot: stats layout does not match metric");
  }
  std::vector<ArmStats::Arm> arms(c.arms);
  std::uint64_t total = 0;
  for (auto& a : arms) {
    a.n = r.u64();
    a.successes = r.u64();
    a.sum = r.f64();
    a.sumsq = r.f64();
    const std::uint64_t count = r.count(8);
    a.sorted.resize(count);
    for (auto& v : a.sorted) v = r.f64();
    if (a.successes > a.n || (layout == StatsLayout::ranked && count != a.n) ||
        (layout != StatsLayout::ranked && count != 0) ||
        !std::isfinite(a.sum) || !std::isfinite(a.sumsq) ||
        (layout == StatsLayout::binary &&
         (a.sum != static_cast<double>(a.successes) || a.sumsq != a.sum)) ||
        !std::all_of(a.sorted.begin(), a.sorted.end(), [](double v) { return std::isfinite(v); }) ||
        !std::is_sorted(a.sorted.begin(), a.sorted.end())) {
      throw CorruptSnapshotError("snapshot: inconsistent arm statistics");
    }
    total += a.n;
  }

  std::uint64_t n = r.u64();
  std::uint64_t pending = r.u64();
  std::uint64_t evaluations = r.u64();
  const double log_lambda_max = r.f64();
  const double last_log_lambda = r.f64();
  const auto decision = enum_at<Decision>(r, 1, "decision");
  if (n != total || pending >= c.batch_interval || !(log_lambda_max >= last_log_lambda)) {
    throw CorruptSnapshotError("snapshot: inconsistent test state");
  }

  std::vector<Evaluation> history(r.count(8 + 8 + 8 + 1 + 1));
  for (auto& e : history) {
    e.n = r.u64();
    e.log_lambda = r.f64();
    e.p_value = r.f64();
    e.decision = enum_at<Decision>(r, 1, "history decision");
    e.deferred = r.u8() != 0;
  }
  if (r.remaining() != 0) {
    throw CorruptSnapshotError("snapshot: trailing bytes");
  }

  try {
    SequentialTest t(RestoreTag{}, std::move(c), ArmStats::from_arms(layout, std::move(arms)));
    t.n_ = n;
    t.pending_ = pending;
    t.evaluations_ = evaluations;
    t.log_lambda_max_ = log_lambda_max;
    t.last_log_lambda_ = last_log_lambda;
    t.decision_ = decision;
    t.history_ = std::move(history);
    return t;
  } catch (const ConfigError& e) {
    throw CorruptSnapshotError(std::string("snapshot: invalid configuration: ") + e.what());
  }
}

}  // namespace msprt
