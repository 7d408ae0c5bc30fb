/*
 * Copyright 2026 The BrainOOD Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "brainood/trainer/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <type_traits>
#include <vector>

#include "brainood/common/error.hpp"
#include "brainood/common/fsio.hpp"
#include "json.hpp"

namespace brainood {

using nlohmann::json;

namespace {

constexpr char kMagic[4] = {'B', 'O', 'O', 'D'};

template <typename T>
void put_le(std::string& out, T v) {
  static_assert(std::is_unsigned_v<T>);
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

template <typename T>
T get_le(std::string_view bytes, std::size_t& pos) {
  if (bytes.size() - pos < sizeof(T)) throw Error(ErrorCode::kFormat, "checkpoint: truncated header");
  T v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i)
    v |= static_cast<T>(static_cast<unsigned char>(bytes[pos + i])) << (8 * i);
  pos += sizeof(T);
  return v;
}

json config_to_json(const TrainConfig& cfg) {
  json j = json::object();
  for_each_field(cfg, [&](const char* name, const auto& value) { j[name] = value; });
  return j;
}

TrainConfig config_from_json(const json& j) {
  TrainConfig cfg;
  for_each_field(cfg, [&](const char* name, auto& value) {
    if (!j.contains(name)) throw Error(ErrorCode::kFormat, std::string("checkpoint: config lacks ") + name);
    value = j.at(name).get<std::remove_reference_t<decltype(value)>>();
  });
  return cfg;
}

struct TensorRef {
  std::string group;
  std::string name;
  const Matrix* value;
};

std::vector<TensorRef> tensor_list(const Checkpoint& c) {
  std::vector<TensorRef> out;
  for (std::size_t i = 0; i < c.params.size(); ++i) out.push_back({"param", c.params.name(i), &c.params.value(i)});
  for (std::size_t i = 0; i < c.buffers.size(); ++i) out.push_back({"buffer", c.buffers.name(i), &c.buffers.value(i)});
  for (std::size_t i = 0; i < c.adam.m.size(); ++i) out.push_back({"adam.m", c.params.name(i), &c.adam.m[i]});
  for (std::size_t i = 0; i < c.adam.v.size(); ++i) out.push_back({"adam.v", c.params.name(i), &c.adam.v[i]});
  return out;
}

}  // namespace

std::string encode_checkpoint(const Checkpoint& c) {
  json meta;
  meta["config"] = config_to_json(c.config);
  meta["n"] = c.n;
  meta["classes"] = c.classes;
  meta["ood_site"] = c.ood_site;
  meta["epoch"] = c.epoch;
  meta["rng"] = {{"shuffle", c.shuffle_rng_state}, {"noise", c.noise_rng_state}};
  meta["adam"] = {{"step", c.adam.step}, {"beta1", c.adam.beta1}, {"beta2", c.adam.beta2},
                  {"eps", c.adam.eps},   {"lr", c.adam.lr}};
  if (c.selection) {
    const SelectionRecord& s = *c.selection;
    meta["selection"] = {{"selection", s.selection},     {"epoch", s.epoch},      {"val_count", s.val_count},
                         {"val_accuracy", s.val_accuracy}, {"val_loss", s.val_loss}};
  }
  json tensors = json::array();
  for (const TensorRef& t : tensor_list(c))
    tensors.push_back({{"group", t.group}, {"name", t.name}, {"rows", t.value->rows()}, {"cols", t.value->cols()}});
  meta["tensors"] = std::move(tensors);
  const std::string text = meta.dump();

  std::string out(kMagic, 4);
  put_le<std::uint32_t>(out, c.format_version);
  put_le<std::uint64_t>(out, text.size());
  out += text;
  for (const TensorRef& t : tensor_list(c))
    for (double v : t.value->values()) put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v));
  return out;
}

Checkpoint decode_checkpoint(std::string_view bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0)
    throw Error(ErrorCode::kFormat, "checkpoint: bad magic (not a BOOD file)");
  std::size_t pos = 4;
  Checkpoint c;
  c.format_version = get_le<std::uint32_t>(bytes, pos);
  if (c.format_version != Checkpoint::kFormatVersion)
    throw Error(ErrorCode::kFormat, "checkpoint: unsupported format version " + std::to_string(c.format_version));
  const std::uint64_t meta_len = get_le<std::uint64_t>(bytes, pos);
  if (bytes.size() - pos < meta_len) throw Error(ErrorCode::kFormat, "checkpoint: truncated metadata");
  json meta;
  try {
    meta = json::parse(bytes.substr(pos, meta_len));
    pos += meta_len;
    c.config = config_from_json(meta.at("config"));
    c.n = meta.at("n").get<std::size_t>();
    c.classes = meta.at("classes").get<std::size_t>();
    c.ood_site = meta.at("ood_site").get<std::string>();
    c.epoch = meta.at("epoch").get<std::size_t>();
    c.shuffle_rng_state = meta.at("rng").at("shuffle").get<std::string>();
    c.noise_rng_state = meta.at("rng").at("noise").get<std::string>();
    const json& adam = meta.at("adam");
    c.adam.step = adam.at("step").get<std::uint64_t>();
    c.adam.beta1 = adam.at("beta1").get<double>();
    c.adam.beta2 = adam.at("beta2").get<double>();
    c.adam.eps = adam.at("eps").get<double>();
    c.adam.lr = adam.at("lr").get<double>();
    if (meta.contains("selection")) {
      const json& s = meta.at("selection");
      c.selection = SelectionRecord{s.at("selection").get<std::string>(), s.at("epoch").get<std::size_t>(),
                                    s.at("val_count").get<std::size_t>(), s.at("val_accuracy").get<double>(),
                                    s.at("val_loss").get<double>()};
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kFormat, std::string("checkpoint: malformed metadata: ") + e.what());
  }
  for (const json& t : meta.at("tensors")) {
    const std::string group = t.at("group").get<std::string>();
    const std::string name = t.at("name").get<std::string>();
    Matrix m(t.at("rows").get<std::size_t>(), t.at("cols").get<std::size_t>());
    if ((bytes.size() - pos) / 8 < m.size()) throw Error(ErrorCode::kFormat, "checkpoint: truncated tensor " + name);
    for (double& v : m.values()) v = std::bit_cast<double>(get_le<std::uint64_t>(bytes, pos));
    if (group == "param") c.params.add(name, std::move(m));
    else if (group == "buffer") c.buffers.add(name, std::move(m));
    else if (group == "adam.m") c.adam.m.push_back(std::move(m));
    else if (group == "adam.v") c.adam.v.push_back(std::move(m));
    else throw Error(ErrorCode::kFormat, "checkpoint: unknown tensor group " + group);
  }
  if (pos != bytes.size()) throw Error(ErrorCode::kFormat, "checkpoint: trailing bytes after tensors");
  return c;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  write_file_atomic(path, encode_checkpoint(ckpt));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  try {
    return decode_checkpoint(read_text_file(path));
  } catch (const Error& e) {
    throw Error(e.code(), path.string() + ": " + e.what());
  }
}

model::BrainOODModel restore_model(const Checkpoint& ckpt) {
  model::BrainOODModel m(ckpt.n, ckpt.classes, ckpt.config);
  auto fill = [](model::TensorStore& dst, const model::TensorStore& src, const char* what) {
    if (dst.names() != src.names())
      throw Error(ErrorCode::kFormat, std::string("checkpoint: ") + what + " inventory does not match the configuration");
    for (std::size_t i = 0; i < dst.size(); ++i) {
      if (!dst.value(i).same_shape(src.value(i)))
        throw Error(ErrorCode::kFormat, "checkpoint: tensor " + src.name(i) + " has shape " +
                                            src.value(i).shape_string() + ", expected " + dst.value(i).shape_string());
      dst.value(i) = src.value(i);
    }
  };
  fill(m.params(), ckpt.params, "parameter");
  fill(m.buffers(), ckpt.buffers, "buffer");
  return m;
}

}  // namespace brainood
