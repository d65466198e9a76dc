#pragma once

#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "titlecut/model.hpp"

namespace titlecut {

// Versioned text checkpoint. Values are printed with 17 significant digits,
// which round-trips doubles exactly, so identical parameters always produce
// byte-identical files.
//
//   titlecut-checkpoint v1
//   mode <mode> / lambda1 / lambda2 / renormalize_agree / reverse_kl
//   dims <emb> <enc> <dec> <attn> <max_source_len>
//   vocab <size>            (one hex codepoint line per non-reserved id)
//   section encoder|pointer|query
//   param <name> <rank> <dims...>  followed by one line per row
//   end
//
// A ptr-only checkpoint omits the query section; loading one into a
// multi-task mode keeps freshly seeded query parameters (warm start).

namespace detail {

inline std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline void write_param(std::ostream& out, const std::string& name,
                        const Tensor& t) {
  out << "param " << name << " " << t.rank();
  for (std::size_t d : t.shape()) out << " " << d;
  out << "\n";
  const std::size_t cols = t.rank() == 2 ? t.cols() : t.size();
  const std::size_t rows = t.size() / cols;
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      if (c) out << " ";
      out << fmt_double(t.value()[r * cols + c]);
    }
    out << "\n";
  }
}

}  // namespace detail

inline void save_checkpoint(const std::string& path, const MtlModel& model,
                            const Vocab& vocab) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ParseError("cannot open '" + path + "' for writing");
  out << "titlecut-checkpoint v1\n";
  out << "mode " << mode_name(model.config.mode) << "\n";
  out << "lambda1 " << detail::fmt_double(model.config.lambda1) << "\n";
  out << "lambda2 " << detail::fmt_double(model.config.lambda2) << "\n";
  out << "renormalize_agree " << (model.config.renormalize_agree ? 1 : 0) << "\n";
  out << "reverse_kl " << (model.config.reverse_kl ? 1 : 0) << "\n";
  out << "dims " << model.dims.emb_dim << " " << model.dims.enc_hidden << " "
      << model.dims.dec_hidden << " " << model.dims.attn_dim << " "
      << model.dims.max_source_len << "\n";
  out << "vocab " << vocab.size() << "\n";
  char hex[16];
  for (std::size_t id = Vocab::kReserved; id < vocab.size(); ++id) {
    std::snprintf(hex, sizeof(hex), "%X", static_cast<unsigned>(vocab.char_of(id)));
    out << hex << "\n";
  }
  const bool with_query = model.config.mode != Mode::PtrOnly;
  std::string current_section;
  for (const auto& [name, t] : model.parameters()) {
    const std::string section = name.substr(0, name.find('.'));
    if (section == "query" && !with_query) continue;
    if (section != current_section) {
      out << "section " << section << "\n";
      current_section = section;
    }
    detail::write_param(out, name, t);
  }
  out << "end\n";
}

struct Checkpoint {
  MtlModel model;
  Vocab vocab;
};

// Loads a checkpoint. `target_mode`, when set, overrides the stored mode;
// missing parameter sections (ptr-only warm start into a multi-task mode)
// keep their fresh initialization from `fresh_seed`.
inline Checkpoint load_checkpoint(const std::string& path,
                                  std::optional<Mode> target_mode = std::nullopt,
                                  std::uint64_t fresh_seed = 1) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open '" + path + "'");
  std::string line;
  auto next_line = [&](const char* what) {
    if (!std::getline(in, line))
      throw ParseError(std::string("checkpoint truncated while reading ") + what);
    return line;
  };
  if (next_line("header") != "titlecut-checkpoint v1")
    throw ParseError("unsupported checkpoint header: '" + line + "'");

  auto read_kv = [&](const char* key) {
    next_line(key);
    std::istringstream ss(line);
    std::string k, v;
    ss >> k >> v;
    if (k != key) throw ParseError("expected '" + std::string(key) + "', got '" + k + "'");
    return v;
  };

  MtlConfig cfg;
  cfg.mode = mode_from_name(read_kv("mode"));
  cfg.lambda1 = std::stod(read_kv("lambda1"));
  cfg.lambda2 = std::stod(read_kv("lambda2"));
  cfg.renormalize_agree = read_kv("renormalize_agree") == "1";
  cfg.reverse_kl = read_kv("reverse_kl") == "1";

  ModelDims dims;
  {
    next_line("dims");
    std::istringstream ss(line);
    std::string k;
    ss >> k >> dims.emb_dim >> dims.enc_hidden >> dims.dec_hidden >>
        dims.attn_dim >> dims.max_source_len;
    if (k != "dims" || !ss) throw ParseError("bad dims line: '" + line + "'");
  }

  std::size_t vocab_size = 0;
  {
    std::istringstream ss(read_kv("vocab"));
    vocab_size = std::stoul(ss.str());
  }
  Vocab vocab;
  for (std::size_t id = Vocab::kReserved; id < vocab_size; ++id) {
    next_line("vocab entry");
    vocab.add(static_cast<char32_t>(std::stoul(line, nullptr, 16)));
  }
  if (vocab.size() != vocab_size)
    throw ParseError("vocab size mismatch after reading entries");

  if (target_mode) cfg.mode = *target_mode;
  Rng rng(fresh_seed);
  Checkpoint ck{MtlModel(vocab_size, dims, cfg, rng), std::move(vocab)};

  std::vector<std::pair<std::string, Tensor>> params = ck.model.parameters();
  auto find_param = [&](const std::string& name) -> Tensor& {
    for (auto& [n, t] : params)
      if (n == name) return t;
    throw ParseError("unknown parameter '" + name + "' in checkpoint");
  };

  while (std::getline(in, line)) {
    if (line == "end") break;
    if (line.rfind("section ", 0) == 0) continue;
    if (line.rfind("param ", 0) != 0)
      throw ParseError("unexpected checkpoint line: '" + line + "'");
    std::istringstream ss(line);
    std::string kw, name;
    std::size_t rank;
    ss >> kw >> name >> rank;
    Shape shape(rank);
    for (std::size_t i = 0; i < rank; ++i) ss >> shape[i];
    if (!ss) throw ParseError("bad param line: '" + line + "'");
    Tensor& t = find_param(name);
    if (t.shape() != shape)
      throw ParseError("parameter '" + name + "' has shape " + shape_str(shape) +
                       " in checkpoint but " + shape_str(t.shape()) + " in model");
    const std::size_t cols = rank == 2 ? shape[1] : shape_numel(shape);
    const std::size_t rows = shape_numel(shape) / cols;
    for (std::size_t r = 0; r < rows; ++r) {
      next_line("param values");
      std::istringstream vs(line);
      for (std::size_t c = 0; c < cols; ++c) {
        if (!(vs >> t.value()[r * cols + c]))
          throw ParseError("short value row for parameter '" + name + "'");
      }
    }
  }
  return ck;
}

}  // namespace titlecut
