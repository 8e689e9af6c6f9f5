#include "semaug/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

namespace semaug {

Parameter& ParameterStore::add(std::string name, Tensor value) {
  if (contains(name)) throw std::invalid_argument("duplicate parameter " + name);
  params_.push_back(std::make_unique<Parameter>(std::move(name), std::move(value)));
  by_name_.emplace(params_.back()->name, params_.back().get());
  return *params_.back();
}

Parameter& ParameterStore::get(const std::string& name) {
  auto it = by_name_.find(name);
  if (it == by_name_.end()) throw std::out_of_range("no parameter named " + name);
  return *it->second;
}

const Parameter& ParameterStore::get(const std::string& name) const {
  auto it = by_name_.find(name);
  if (it == by_name_.end()) throw std::out_of_range("no parameter named " + name);
  return *it->second;
}

bool ParameterStore::contains(const std::string& name) const { return by_name_.count(name) > 0; }

std::size_t ParameterStore::total_values() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p->value.size();
  return n;
}

std::vector<Parameter*> ParameterStore::all() {
  std::vector<Parameter*> out;
  for (auto& p : params_) out.push_back(p.get());
  return out;
}

std::vector<const Parameter*> ParameterStore::all() const {
  std::vector<const Parameter*> out;
  for (const auto& p : params_) out.push_back(p.get());
  return out;
}

void ParameterStore::zero_grad() {
  for (auto& p : params_) p->zero_grad();
}

namespace {

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}

  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += 8;
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string text(std::uint64_t n) {
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  void need(std::uint64_t n) const {
    if (n > bytes_.size() - pos_) {
      throw CheckpointError("checkpoint truncated: need " + std::to_string(n) + " bytes at offset " +
                            std::to_string(pos_) + " of " + std::to_string(bytes_.size()));
    }
  }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  const std::string& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string encode_checkpoint(const NamedTensors& tensors) {
  std::string out(kCheckpointMagic, sizeof(kCheckpointMagic));
  put_u64(out, kCheckpointVersion);
  put_u64(out, tensors.size());
  for (const auto& [name, t] : tensors) {
    put_u64(out, name.size());
    out += name;
    put_u64(out, t.rank());
    for (std::size_t d : t.shape()) put_u64(out, d);
    for (double v : t.data()) put_u64(out, std::bit_cast<std::uint64_t>(v));
  }
  return out;
}

NamedTensors decode_checkpoint(const std::string& bytes) {
  Reader in(bytes);
  if (in.text(sizeof(kCheckpointMagic)) != std::string(kCheckpointMagic, sizeof(kCheckpointMagic))) {
    throw CheckpointError("not a checkpoint (bad magic)");
  }
  const std::uint64_t version = in.u64();
  if (version != kCheckpointVersion) throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
  const std::uint64_t count = in.u64();
  NamedTensors out;
  for (std::uint64_t i = 0; i < count; ++i) {
    std::string name = in.text(in.u64());
    const std::uint64_t rank = in.u64();
    if (rank > in.remaining() / 8) throw CheckpointError("checkpoint truncated in shape of " + name);
    Shape shape;
    std::uint64_t n = 1;
    for (std::uint64_t r = 0; r < rank; ++r) {
      shape.push_back(in.u64());
      if (shape.back() != 0 && n > (in.remaining() / 8) / shape.back()) {
        throw CheckpointError("checkpoint truncated in values of " + name);
      }
      n *= shape.back();
    }
    in.need(n * 8);
    std::vector<double> data(n);
    for (double& v : data) v = in.f64();
    out.emplace_back(std::move(name), Tensor(std::move(shape), std::move(data)));
  }
  if (in.remaining() != 0) {
    throw CheckpointError("checkpoint has " + std::to_string(in.remaining()) + " trailing bytes");
  }
  return out;
}

void save_checkpoint(const std::filesystem::path& path, const NamedTensors& tensors) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw CheckpointError("cannot write " + path.string());
  const std::string bytes = encode_checkpoint(tensors);
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw CheckpointError("write failed for " + path.string());
}

NamedTensors load_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw CheckpointError("cannot read " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

NamedTensors snapshot(const ParameterStore& store) {
  NamedTensors out;
  for (const Parameter* p : store.all()) out.emplace_back(p->name, p->value);
  return out;
}

void restore(ParameterStore& store, const NamedTensors& tensors) {
  for (Parameter* p : store.all()) {
    auto it = std::find_if(tensors.begin(), tensors.end(), [&](const auto& kv) { return kv.first == p->name; });
    if (it == tensors.end()) throw CheckpointError("checkpoint lacks parameter " + p->name);
    if (it->second.shape() != p->value.shape()) {
      throw CheckpointError("shape mismatch for " + p->name + ": " + shape_string(it->second.shape()) + " vs " +
                            shape_string(p->value.shape()));
    }
    p->value = it->second;
  }
}

}  // namespace semaug
