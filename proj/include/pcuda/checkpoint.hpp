#pragma once

// Versioned text checkpoints of ModelParams plus EncoderConfig.
//
//   pcuda-checkpoint v1
//   memory-bank excluded
//   hidden 64 128
//   feature_dim 128
//   ...
//   tensors <n>
//   tensor <name> <extent>...
//   <one line of values per row>
//   end
//
// The memory bank is never stored; a resumed run re-warms it.

#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "pcuda/model.hpp"
#include "pcuda/textio.hpp"

namespace pcuda {

inline constexpr const char* kCheckpointMagic = "pcuda-checkpoint v1";

inline void write_checkpoint(std::ostream& out, const ModelParams& params) {
  const auto& c = params.config();
  out << kCheckpointMagic << '\n';
  out << "memory-bank excluded\n";
  out << "hidden";
  for (auto h : c.hidden) out << ' ' << h;
  out << '\n';
  out << "feature_dim " << c.feature_dim << '\n';
  out << "edge_conv " << (c.edge_conv ? 1 : 0) << '\n';
  out << "edge_k " << c.edge_k << '\n';
  out << "num_classes " << c.num_classes << '\n';
  out << "translation_classes " << c.translation_classes << '\n';
  out << "projection_dim " << c.projection_dim << '\n';
  const auto named = params.named();
  out << "tensors " << named.size() << '\n';
  for (const auto& [name, t] : named) {
    out << "tensor " << name;
    for (auto e : t.shape()) out << ' ' << e;
    out << '\n';
    const std::size_t rows = t.rank() == 1 ? 1 : t.rows();
    const std::size_t cols = t.size() / rows;
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t j = 0; j < cols; ++j)
        out << (j ? " " : "") << textio::format_double(t.values()[r * cols + j]);
      out << '\n';
    }
  }
  out << "end\n";
}

inline void save_checkpoint(const std::string& path, const ModelParams& params) {
  auto out = textio::open_out(path);
  write_checkpoint(out, params);
  if (!out) throw Error("failed writing checkpoint '" + path + "'");
}

inline ModelParams read_checkpoint(std::istream& in, const std::string& source = "<checkpoint>") {
  textio::LineReader r(in, source);
  if (r.expect("header") != kCheckpointMagic) r.fail("not a pcuda v1 checkpoint");
  if (r.expect("memory-bank line") != "memory-bank excluded") r.fail("expected 'memory-bank excluded'");

  EncoderConfig c;
  auto keyed = [&](const char* key) {
    const std::string line = r.expect(key);
    auto tok = textio::split(line);
    if (tok.empty() || tok[0] != key) r.fail(std::string("expected '") + key + "'");
    return std::vector<std::string>(tok.begin() + 1, tok.end());
  };
  auto single = [&](const char* key) {
    auto v = keyed(key);
    if (v.size() != 1) r.fail(std::string("'") + key + "' takes one value");
    return static_cast<std::size_t>(r.to_uint(v[0]));
  };
  c.hidden.clear();
  for (auto tok : keyed("hidden")) c.hidden.push_back(static_cast<std::size_t>(r.to_uint(tok)));
  c.feature_dim = single("feature_dim");
  c.edge_conv = single("edge_conv") != 0;
  c.edge_k = single("edge_k");
  c.num_classes = single("num_classes");
  c.translation_classes = single("translation_classes");
  c.projection_dim = single("projection_dim");
  try {
    c.validate();
  } catch (const ValueError& e) {
    r.fail(e.what());
  }
  const ModelParams shape_ref = ModelParams::init(c, 0);
  const auto ref = shape_ref.named();
  const std::size_t count = single("tensors");
  if (count != ref.size())
    r.fail("expected " + std::to_string(ref.size()) + " tensors for this config, found " +
           std::to_string(count));

  std::vector<std::vector<double>> values;
  for (const auto& [name, t] : ref) {
    const std::string head = r.expect("tensor " + name);
    auto tok = textio::split(head);
    if (tok.size() < 3 || tok[0] != "tensor") r.fail("expected 'tensor <name> <shape>'");
    if (tok[1] != name) r.fail("expected tensor '" + name + "', found '" + std::string(tok[1]) + "'");
    Shape shape;
    for (std::size_t i = 2; i < tok.size(); ++i) shape.push_back(static_cast<std::size_t>(r.to_uint(tok[i])));
    if (shape != t.shape())
      r.fail("tensor '" + name + "' has shape " + shape_string(shape) + ", expected " +
             shape_string(t.shape()));
    const std::size_t rows = t.rank() == 1 ? 1 : t.rows();
    const std::size_t cols = t.size() / rows;
    std::vector<double> v;
    v.reserve(t.size());
    for (std::size_t row = 0; row < rows; ++row) {
      const std::string line = r.expect("values of '" + name + "'");
      auto nums = textio::split(line);
      if (nums.size() != cols)
        r.fail("tensor '" + name + "' row has " + std::to_string(nums.size()) + " values, expected " +
               std::to_string(cols));
      for (auto n : nums) {
        const double x = r.to_double(n);
        if (!std::isfinite(x)) r.fail("non-finite value in tensor '" + name + "'");
        v.push_back(x);
      }
    }
    values.push_back(std::move(v));
  }
  if (r.expect("end") != "end") r.fail("expected 'end'");
  return ModelParams::from_values(c, std::move(values));
}

inline ModelParams load_checkpoint(const std::string& path) {
  auto in = textio::open_in(path);
  return read_checkpoint(in, path);
}

}  // namespace pcuda
