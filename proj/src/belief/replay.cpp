#include "econ/belief/replay.hpp"

#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>

namespace econ {
namespace {

class Writer {
 public:
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  void f64(double x) {
    std::uint64_t bits;
    std::memcpy(&bits, &x, sizeof bits);
    u64(bits);
  }
  void vec(const std::vector<double>& v) {
    u64(v.size());
    for (double x : v) f64(x);
  }
  void action(const PromptEmbedding& e) {
    f64(e.temperature);
    f64(e.repetition_penalty);
  }
  void obs(const Observation& o) {
    vec(o.task);
    vec(o.strategy);
    vec(o.prior_belief);
  }
  void traj(const Trajectory& t) {
    u64(t.window());
    u64(t.size());
    for (const auto& s : t.steps()) {
      action(s.action);
      obs(s.observation);
    }
  }
  const std::string& bytes() const { return buf_; }

 private:
  std::string buf_;
};

class Reader {
 public:
  explicit Reader(std::string buf) : buf_(std::move(buf)) {}
  std::uint64_t u64() {
    if (pos_ + 8 > buf_.size()) throw std::runtime_error("transition record truncated");
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf_[pos_ + i])) << (8 * i);
    pos_ += 8;
    return v;
  }
  double f64() {
    const std::uint64_t bits = u64();
    double x;
    std::memcpy(&x, &bits, sizeof x);
    return x;
  }
  std::vector<double> vec() {
    const std::uint64_t n = u64();
    if (n > (buf_.size() - pos_) / 8) throw std::runtime_error("transition record: bad vector length");
    std::vector<double> v(n);
    for (double& x : v) x = f64();
    return v;
  }
  PromptEmbedding action() {
    PromptEmbedding e;
    e.temperature = f64();
    e.repetition_penalty = f64();
    return e;
  }
  Observation obs() {
    Observation o;
    o.task = vec();
    o.strategy = vec();
    o.prior_belief = vec();
    return o;
  }
  Trajectory traj() {
    Trajectory t(u64());
    const std::uint64_t n = u64();
    for (std::uint64_t i = 0; i < n; ++i) {
      TrajectoryStep s;
      s.action = action();
      s.observation = obs();
      t.push(std::move(s));
    }
    return t;
  }
  bool done() const { return pos_ == buf_.size(); }

 private:
  std::string buf_;
  std::size_t pos_ = 0;
};

}  // namespace

void write_transition(std::ostream& os, const Transition& t) {
  Writer w;
  w.traj(t.trajectory);
  w.obs(t.observation);
  w.action(t.action);
  w.f64(t.reward);
  w.traj(t.next_trajectory);
  w.obs(t.next_observation);
  w.u64(t.terminal ? 1 : 0);
  Writer len;
  len.u64(w.bytes().size());
  os.write(len.bytes().data(), 8);
  os.write(w.bytes().data(), static_cast<std::streamsize>(w.bytes().size()));
  if (!os) throw std::runtime_error("transition spill: write failed");
}

bool read_transition(std::istream& is, Transition& t) {
  std::string head(8, '\0');
  is.read(head.data(), 8);
  if (is.gcount() == 0) return false;
  if (is.gcount() != 8) throw std::runtime_error("transition record truncated");
  const std::uint64_t n = Reader(head).u64();
  std::string body(n, '\0');
  is.read(body.data(), static_cast<std::streamsize>(n));
  if (static_cast<std::uint64_t>(is.gcount()) != n) throw std::runtime_error("transition record truncated");
  Reader r(std::move(body));
  t.trajectory = r.traj();
  t.observation = r.obs();
  t.action = r.action();
  t.reward = r.f64();
  t.next_trajectory = r.traj();
  t.next_observation = r.obs();
  t.terminal = r.u64() != 0;
  if (!r.done()) throw std::runtime_error("transition record has trailing bytes");
  return true;
}

}  // namespace econ
