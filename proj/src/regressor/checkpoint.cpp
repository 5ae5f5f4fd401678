#include "dr2s/regressor/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <iterator>

#include "dr2s/core/error.hpp"
#include "dr2s/core/io.hpp"
#include "dr2s/core/rng.hpp"

namespace dr2s::regressor {

namespace {

constexpr char kMagic[8] = {'D', 'R', '2', 'S', 'N', 'E', 'T', '\0'};

template <typename T>
void put(std::string& buf, T v) {
  char raw[sizeof(T)];
  std::memcpy(raw, &v, sizeof(T));
  buf.append(raw, sizeof(T));
}

class Reader {
 public:
  Reader(const std::string& buf, std::size_t end, const std::filesystem::path& path)
      : buf_(buf), end_(end), path_(path) {}

  template <typename T>
  T get() {
    if (pos_ + sizeof(T) > end_) fail("truncated");
    T v;
    std::memcpy(&v, buf_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }

  std::size_t pos() const { return pos_; }

  [[noreturn]] void fail(const std::string& what) const {
    throw IntegrityError("checkpoint " + path_.string() + ": " + what);
  }

 private:
  const std::string& buf_;
  std::size_t end_;
  std::size_t pos_ = 0;
  const std::filesystem::path& path_;
};

}  // namespace

std::filesystem::path checkpoint_meta_path(const std::filesystem::path& path) {
  auto p = path;
  p.replace_extension(".json");
  return p;
}

void save_checkpoint(const std::filesystem::path& path, const RegressorNet& net, const nlohmann::json& meta) {
  std::string buf(kMagic, sizeof kMagic);
  put<std::uint32_t>(buf, kCheckpointVersion);
  put<std::uint32_t>(buf, static_cast<std::uint32_t>(net.in_channels()));
  put<std::uint32_t>(buf, kBlocks);
  for (int l = 0; l < kBlocks; ++l) {
    put<std::uint32_t>(buf, static_cast<std::uint32_t>(net.block_in(l)));
    put<std::uint32_t>(buf, static_cast<std::uint32_t>(net.block_out(l)));
    put<std::uint32_t>(buf, static_cast<std::uint32_t>(kStrides[l]));
  }
  put<std::uint64_t>(buf, net.param_count());
  for (double v : net.params()) put<double>(buf, v);
  put<std::uint64_t>(buf, fnv1a64(buf));

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint " + path.string());
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw IoError("short write on checkpoint " + path.string());
  out.close();
  write_text(checkpoint_meta_path(path), meta.dump(2) + "\n");
}

RegressorNet load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  const std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (buf.size() < sizeof kMagic + sizeof(std::uint64_t)) {
    throw IntegrityError("checkpoint " + path.string() + ": truncated");
  }
  const std::size_t body = buf.size() - sizeof(std::uint64_t);
  Reader r(buf, buf.size(), path);
  if (std::memcmp(buf.data(), kMagic, sizeof kMagic) != 0) r.fail("bad magic");
  std::uint64_t stored;
  std::memcpy(&stored, buf.data() + body, sizeof stored);
  if (stored != fnv1a64(std::string_view(buf.data(), body))) r.fail("checksum mismatch");

  for (std::size_t i = 0; i < sizeof kMagic; ++i) r.get<char>();
  if (r.get<std::uint32_t>() != kCheckpointVersion) r.fail("unsupported version");
  const auto in_channels = r.get<std::uint32_t>();
  if (r.get<std::uint32_t>() != static_cast<std::uint32_t>(kBlocks)) r.fail("unexpected block count");
  std::uint32_t dims[kBlocks][3];
  for (auto& d : dims) {
    for (auto& v : d) v = r.get<std::uint32_t>();
  }
  if (in_channels < 1 || dims[kBlocks - 1][1] < 1) r.fail("bad layer dimensions");
  RegressorNet net(static_cast<int>(in_channels), static_cast<int>(dims[kBlocks - 1][1]));
  for (int l = 0; l < kBlocks; ++l) {
    if (dims[l][0] != static_cast<std::uint32_t>(net.block_in(l)) ||
        dims[l][1] != static_cast<std::uint32_t>(net.block_out(l)) ||
        dims[l][2] != static_cast<std::uint32_t>(kStrides[l])) {
      r.fail("layer " + std::to_string(l) + " does not match the network layout");
    }
  }
  if (r.get<std::uint64_t>() != net.param_count()) r.fail("parameter count mismatch");
  for (double& v : net.params()) v = r.get<double>();
  if (r.pos() != body) r.fail("trailing bytes");
  return net;
}

nlohmann::json load_checkpoint_meta(const std::filesystem::path& path) {
  const auto meta = checkpoint_meta_path(path);
  if (!std::filesystem::exists(meta)) return nlohmann::json::object();
  try {
    return nlohmann::json::parse(read_text(meta));
  } catch (const nlohmann::json::exception& e) {
    throw IntegrityError("checkpoint metadata " + meta.string() + ": " + e.what());
  }
}

}  // namespace dr2s::regressor
