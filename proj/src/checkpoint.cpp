#include "ivfuse/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "ivfuse/errors.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoint blobs are little-endian");

namespace ivfuse {

using nlohmann::json;

namespace {

constexpr char kMagic[8] = {'I', 'V', 'F', 'C', 'K', 'P', 'T', '1'};

struct BlobWriter {
  std::vector<double> blob;
  json entries = json::array();

  void add(const std::string& key, const Tensor& t) {
    json e;
    e["key"] = key;
    e["dtype"] = "f64";
    e["shape"] = t.shape;
    e["offset"] = blob.size() * sizeof(double);
    e["nbytes"] = t.data.size() * sizeof(double);
    entries.push_back(e);
    blob.insert(blob.end(), t.data.begin(), t.data.end());
  }
};

Tensor read_tensor(const json& e, const std::vector<double>& blob) {
  Tensor t;
  t.shape = e.at("shape").get<std::vector<int>>();
  const size_t offset = e.at("offset").get<size_t>();
  const size_t nbytes = e.at("nbytes").get<size_t>();
  const size_t count = nbytes / sizeof(double);
  require(offset % sizeof(double) == 0 && nbytes % sizeof(double) == 0,
          "checkpoint: misaligned tensor record");
  const size_t begin = offset / sizeof(double);
  require(begin + count <= blob.size(), "checkpoint: blob record out of range");
  require(static_cast<int64_t>(count) == numel_of(t.shape),
          "checkpoint: tensor size does not match its shape");
  t.data.assign(blob.begin() + begin, blob.begin() + begin + count);
  return t;
}

}  // namespace

void save_checkpoint(const Checkpoint& ck, const std::string& path) {
  BlobWriter w;
  json manifest;
  manifest["format"] = 1;
  manifest["iteration"] = ck.iteration;
  manifest["config"] = ck.config;
  manifest["perm_ir"] = ck.perm_ir;
  manifest["perm_vis"] = ck.perm_vis;

  for (const auto& [key, t] : ck.tensors) w.add(key, t);
  manifest["tensors"] = std::move(w.entries);

  w.entries = json::array();
  json steps = json::object();
  for (const auto& [name, st] : ck.adam) {
    steps[name] = st.step;
    for (const auto& [key, t] : st.m) w.add(name + "/" + key + "/m", t);
    for (const auto& [key, t] : st.v) w.add(name + "/" + key + "/v", t);
  }
  manifest["adam_steps"] = std::move(steps);
  manifest["adam_tensors"] = std::move(w.entries);

  const std::string mstr = manifest.dump();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open checkpoint for writing: " + path);
  out.write(kMagic, sizeof(kMagic));
  const uint64_t mlen = mstr.size();
  out.write(reinterpret_cast<const char*>(&mlen), sizeof(mlen));
  out.write(mstr.data(), static_cast<std::streamsize>(mstr.size()));
  out.write(reinterpret_cast<const char*>(w.blob.data()),
            static_cast<std::streamsize>(w.blob.size() * sizeof(double)));
  if (!out) throw IoError("short write on checkpoint: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint: " + path);
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw ValidationError("not a checkpoint file: " + path);
  uint64_t mlen = 0;
  in.read(reinterpret_cast<char*>(&mlen), sizeof(mlen));
  std::string mstr(mlen, '\0');
  in.read(mstr.data(), static_cast<std::streamsize>(mlen));
  if (!in) throw ValidationError("truncated checkpoint manifest: " + path);

  std::vector<double> blob;
  {
    std::vector<char> rest((std::istreambuf_iterator<char>(in)),
                           std::istreambuf_iterator<char>());
    require(rest.size() % sizeof(double) == 0,
            "checkpoint: blob is not a whole number of doubles");
    blob.resize(rest.size() / sizeof(double));
    std::memcpy(blob.data(), rest.data(), rest.size());
  }

  json manifest;
  try {
    manifest = json::parse(mstr);
  } catch (const json::exception& e) {
    throw ValidationError(std::string("checkpoint manifest is not JSON: ") +
                          e.what());
  }

  Checkpoint ck;
  ck.iteration = manifest.at("iteration").get<int64_t>();
  ck.config =
      manifest.at("config").get<std::map<std::string, std::string>>();
  ck.perm_ir = manifest.at("perm_ir").get<std::vector<int>>();
  ck.perm_vis = manifest.at("perm_vis").get<std::vector<int>>();

  for (const auto& e : manifest.at("tensors"))
    ck.tensors[e.at("key").get<std::string>()] = read_tensor(e, blob);

  for (const auto& [name, step] : manifest.at("adam_steps").items())
    ck.adam[name].step = step.get<int64_t>();
  for (const auto& e : manifest.at("adam_tensors")) {
    const std::string key = e.at("key").get<std::string>();
    const size_t s1 = key.find('/');
    const size_t s2 = key.rfind('/');
    require(s1 != std::string::npos && s2 != std::string::npos && s2 > s1,
            "checkpoint: malformed optimizer tensor key " + key);
    const std::string opt = key.substr(0, s1);
    const std::string param = key.substr(s1 + 1, s2 - s1 - 1);
    const std::string kind = key.substr(s2 + 1);
    Tensor t = read_tensor(e, blob);
    if (kind == "m")
      ck.adam[opt].m[param] = std::move(t);
    else if (kind == "v")
      ck.adam[opt].v[param] = std::move(t);
    else
      throw ValidationError("checkpoint: unknown optimizer slot " + kind);
  }
  return ck;
}

}  // namespace ivfuse
