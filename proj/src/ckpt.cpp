#include "fp/ckpt.hpp"

#include <bit>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "fp/util.hpp"

static_assert(std::endian::native == std::endian::little,
              "tensor blobs are raw little-endian f64");

namespace fp {

namespace {

// manifest order: every atom's W then b, then every module head's W then b
std::vector<std::pair<std::string, Tensor>> tensor_table(const Backbone& bb) {
  std::vector<std::pair<std::string, Tensor>> out;
  for (size_t a = 0; a < bb.atoms.size(); ++a) {
    out.emplace_back(cat("atom", a, ".W"), bb.atoms[a].W);
    out.emplace_back(cat("atom", a, ".b"), bb.atoms[a].b);
  }
  for (int m = 1; m <= bb.M(); ++m) {
    out.emplace_back(cat("module", m, ".aux.W"), bb.module(m).aux.W);
    out.emplace_back(cat("module", m, ".aux.b"), bb.module(m).aux.b);
  }
  return out;
}

std::string blob_name(size_t idx) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "t%04zu.bin", idx);
  return buf;
}

void write_blob(const std::string& path, const std::vector<double>& v) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  check(f.good(), cat("cannot open for writing: ", path));
  f.write(reinterpret_cast<const char*>(v.data()),
          (std::streamsize)(v.size() * sizeof(double)));
  check(f.good(), cat("write failed: ", path));
}

void read_blob(const std::string& path, std::vector<double>& v) {
  std::ifstream f(path, std::ios::binary | std::ios::ate);
  check(f.good(), cat("cannot open: ", path));
  auto bytes = (int64_t)f.tellg();
  check(bytes == (int64_t)(v.size() * sizeof(double)),
        cat(path, " holds ", bytes, " bytes, expected ", v.size() * sizeof(double)));
  f.seekg(0);
  f.read(reinterpret_cast<char*>(v.data()), bytes);
  check(f.good(), cat("read failed: ", path));
}

double parse_double(const std::string& field, const std::string& v) {
  check(!v.empty(), cat("manifest: empty ", field));
  char* end = nullptr;
  double out = std::strtod(v.c_str(), &end);
  check(end == v.c_str() + v.size(), cat("manifest: bad ", field, ": '", v, "'"));
  return out;
}

int parse_int(const std::string& field, const std::string& v) {
  try {
    size_t pos = 0;
    int out = std::stoi(v, &pos);
    check(pos == v.size(), "");
    return out;
  } catch (...) {
    throw std::invalid_argument(cat("manifest: bad ", field, ": '", v, "'"));
  }
}

}  // namespace

bool checkpoint_exists(const std::string& dir) {
  return std::filesystem::exists(std::filesystem::path(dir) / "manifest.txt");
}

void save_checkpoint(const std::string& dir, const Checkpoint& c) {
  std::filesystem::create_directories(dir);
  auto table = tensor_table(c.bb);

  std::ostringstream os;
  os << "format 1\n";
  os << "preset " << c.bb.preset << "\n";
  os << "input_shape";
  for (int d : c.bb.input_shape) os << " " << d;
  os << "\n";
  os << "classes " << c.bb.classes << "\n";
  os << "modules " << c.bb.M() << "\n";
  for (int m = 1; m <= c.bb.M(); ++m) {
    const ModuleSpec& ms = c.bb.module(m);
    os << "module " << m << " " << ms.atom_lo << " " << ms.atom_hi << " " << (ms.frozen ? 1 : 0)
       << "\n";
  }
  os << "round " << c.round << "\n";
  os << "stage " << c.stage << "\n";
  os << "stage_start " << c.stage_start << "\n";
  os << "finished " << (c.finished ? 1 : 0) << "\n";
  os << "alpha " << fmt_double(c.schedule.alpha) << "\n";
  os << "epsilon " << fmt_double(c.schedule.epsilon) << "\n";
  os << "mean_dstar " << fmt_double(c.schedule.mean_dstar) << "\n";
  os << "ref_clean " << fmt_double(c.schedule.ref_clean) << "\n";
  os << "ref_adv " << fmt_double(c.schedule.ref_adv) << "\n";
  os << "has_reference " << (c.schedule.has_reference ? 1 : 0) << "\n";
  os << "delta " << fmt_double(c.schedule.delta) << "\n";
  os << "alpha_floor " << fmt_double(c.schedule.alpha_floor) << "\n";
  os << "alpha_cap " << fmt_double(c.schedule.alpha_cap) << "\n";
  os << "tensors " << table.size() << "\n";
  for (size_t i = 0; i < table.size(); ++i) {
    os << "tensor " << i << " " << table[i].first;
    for (int d : table[i].second.shape()) os << " " << d;
    os << "\n";
  }
  for (size_t i = 0; i < table.size(); ++i)
    write_blob((std::filesystem::path(dir) / blob_name(i)).string(), table[i].second.values());
  write_text_file((std::filesystem::path(dir) / "manifest.txt").string(), os.str());
}

Checkpoint load_checkpoint(const std::string& dir) {
  std::string text = read_text_file((std::filesystem::path(dir) / "manifest.txt").string());
  std::vector<std::vector<std::string>> rows;
  for (const std::string& raw : split(text, '\n')) {
    std::string line = trim(raw);
    if (line.empty()) continue;
    std::vector<std::string> toks;
    for (const std::string& t : split(line, ' '))
      if (!trim(t).empty()) toks.push_back(trim(t));
    rows.push_back(std::move(toks));
  }
  size_t at = 0;
  auto want = [&](const std::string& tag, size_t min_toks) -> const std::vector<std::string>& {
    check(at < rows.size(), cat("manifest: missing ", tag, " line"));
    const auto& r = rows[at++];
    check(r[0] == tag && r.size() >= min_toks, cat("manifest: expected ", tag, " line, got '",
                                                   r[0], "'"));
    return r;
  };

  check(want("format", 2)[1] == "1", "manifest: unsupported format");
  Checkpoint c;
  std::string preset = want("preset", 2)[1];
  const auto& shp = want("input_shape", 2);
  Shape input_shape;
  for (size_t i = 1; i < shp.size(); ++i) input_shape.push_back(parse_int("input_shape", shp[i]));
  int classes = parse_int("classes", want("classes", 2)[1]);
  int n_modules = parse_int("modules", want("modules", 2)[1]);
  std::vector<std::pair<int, int>> ranges;
  std::vector<bool> frozen;
  for (int m = 1; m <= n_modules; ++m) {
    const auto& r = want("module", 5);
    check(parse_int("module index", r[1]) == m, "manifest: modules out of order");
    ranges.emplace_back(parse_int("atom_lo", r[2]), parse_int("atom_hi", r[3]));
    frozen.push_back(parse_int("frozen", r[4]) != 0);
  }
  c.round = parse_int("round", want("round", 2)[1]);
  c.stage = parse_int("stage", want("stage", 2)[1]);
  c.stage_start = parse_int("stage_start", want("stage_start", 2)[1]);
  c.finished = parse_int("finished", want("finished", 2)[1]) != 0;
  c.schedule.alpha = parse_double("alpha", want("alpha", 2)[1]);
  c.schedule.epsilon = parse_double("epsilon", want("epsilon", 2)[1]);
  c.schedule.mean_dstar = parse_double("mean_dstar", want("mean_dstar", 2)[1]);
  c.schedule.ref_clean = parse_double("ref_clean", want("ref_clean", 2)[1]);
  c.schedule.ref_adv = parse_double("ref_adv", want("ref_adv", 2)[1]);
  c.schedule.has_reference = parse_int("has_reference", want("has_reference", 2)[1]) != 0;
  c.schedule.delta = parse_double("delta", want("delta", 2)[1]);
  c.schedule.alpha_floor = parse_double("alpha_floor", want("alpha_floor", 2)[1]);
  c.schedule.alpha_cap = parse_double("alpha_cap", want("alpha_cap", 2)[1]);

  c.bb.preset = preset;
  c.bb.input_shape = input_shape;
  c.bb.classes = classes;
  c.bb.atoms = make_preset_atoms(preset, input_shape, 0);
  install_modules(c.bb, ranges, 0);
  for (int m = 1; m <= n_modules; ++m) c.bb.module(m).frozen = frozen[(size_t)m - 1];

  auto table = tensor_table(c.bb);
  size_t n_tensors = (size_t)parse_int("tensors", want("tensors", 2)[1]);
  check(n_tensors == table.size(),
        cat("manifest lists ", n_tensors, " tensors, model has ", table.size()));
  for (size_t i = 0; i < table.size(); ++i) {
    const auto& r = want("tensor", 3);
    check((size_t)parse_int("tensor index", r[1]) == i, "manifest: tensors out of order");
    check(r[2] == table[i].first,
          cat("manifest tensor ", i, " is ", r[2], ", model expects ", table[i].first));
    Shape s;
    for (size_t j = 3; j < r.size(); ++j) s.push_back(parse_int("tensor shape", r[j]));
    check(s == table[i].second.shape(), cat("manifest tensor ", i, " shape mismatch"));
    read_blob((std::filesystem::path(dir) / blob_name(i)).string(), table[i].second.values());
  }
  return c;
}

}  // namespace fp
