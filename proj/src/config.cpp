#include "fp/config.hpp"

#include <charconv>
#include <cstdlib>
#include <set>

#include "fp/util.hpp"

namespace fp {

namespace {

int to_int(const std::string& key, const std::string& v) {
  int out = 0;
  auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  check(res.ec == std::errc() && res.ptr == v.data() + v.size(),
        cat("key ", key, ": not an integer: '", v, "'"));
  return out;
}

int64_t to_int64(const std::string& key, const std::string& v) {
  int64_t out = 0;
  auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  check(res.ec == std::errc() && res.ptr == v.data() + v.size(),
        cat("key ", key, ": not an integer: '", v, "'"));
  return out;
}

uint64_t to_uint64(const std::string& key, const std::string& v) {
  uint64_t out = 0;
  auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  check(res.ec == std::errc() && res.ptr == v.data() + v.size(),
        cat("key ", key, ": not an unsigned integer: '", v, "'"));
  return out;
}

double to_double(const std::string& key, const std::string& v) {
  check(!v.empty(), cat("key ", key, ": empty value"));
  char* end = nullptr;
  double out = std::strtod(v.c_str(), &end);
  check(end == v.c_str() + v.size(), cat("key ", key, ": not a number: '", v, "'"));
  return out;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true") return true;
  if (v == "false") return false;
  throw std::invalid_argument(cat("key ", key, ": expected true or false, got '", v, "'"));
}

std::vector<int> to_int_list(const std::string& key, const std::string& v) {
  std::vector<int> out;
  for (const std::string& tok : split(v, ' ')) {
    std::string t = trim(tok);
    if (!t.empty()) out.push_back(to_int(key, t));
  }
  return out;
}

}  // namespace

RunConfig parse_config_text(const std::string& text) {
  RunConfig c;
  std::set<std::string> seen;
  int lineno = 0;
  for (const std::string& raw : split(text, '\n')) {
    ++lineno;
    std::string line = raw;
    size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    size_t eq = line.find('=');
    check(eq != std::string::npos, cat("line ", lineno, ": expected key = value, got '", line, "'"));
    std::string key = trim(line.substr(0, eq));
    std::string val = trim(line.substr(eq + 1));
    check(!key.empty(), cat("line ", lineno, ": empty key"));
    check(seen.insert(key).second, cat("line ", lineno, ": key '", key, "' given twice"));

    if (key == "preset") c.preset = val;
    else if (key == "dataset") c.dataset = val;
    else if (key == "blob_dim") c.blob_dim = to_int(key, val);
    else if (key == "blob_sigma") c.blob_sigma = to_double(key, val);
    else if (key == "classes") c.classes = to_int(key, val);
    else if (key == "train_per_class") c.train_per_class = to_int(key, val);
    else if (key == "test_per_class") c.test_per_class = to_int(key, val);
    else if (key == "idx_train_images") c.idx_train_images = val;
    else if (key == "idx_train_labels") c.idx_train_labels = val;
    else if (key == "idx_test_images") c.idx_test_images = val;
    else if (key == "idx_test_labels") c.idx_test_labels = val;
    else if (key == "clients") c.clients = to_int(key, val);
    else if (key == "regime") c.regime = val;
    else if (key == "val_fraction") c.val_fraction = to_double(key, val);
    else if (key == "seed") c.seed = to_uint64(key, val);
    else if (key == "mu") c.mu = to_double(key, val);
    else if (key == "delta") c.delta = to_double(key, val);
    else if (key == "alpha_init") c.alpha_init = to_double(key, val);
    else if (key == "epsilon0") c.epsilon0 = to_double(key, val);
    else if (key == "pgd_train_steps") c.pgd_train_steps = to_int(key, val);
    else if (key == "pgd_eval_steps") c.pgd_eval_steps = to_int(key, val);
    else if (key == "lr") c.lr = to_double(key, val);
    else if (key == "momentum") c.momentum = to_double(key, val);
    else if (key == "local_iterations") c.local_iterations = to_int(key, val);
    else if (key == "batch_size") c.batch_size = to_int(key, val);
    else if (key == "rounds_total") c.rounds_total = to_int(key, val);
    else if (key == "rounds_per_module") c.rounds_per_module = to_int_list(key, val);
    else if (key == "patience") c.patience = to_int(key, val);
    else if (key == "min_delta") c.min_delta = to_double(key, val);
    else if (key == "r_min_fraction") c.r_min_fraction = to_double(key, val);
    else if (key == "r_min_bytes") c.r_min_bytes = to_int64(key, val);
    else if (key == "mode") c.mode = val;
    else if (key == "apa_off") c.apa_off = to_bool(key, val);
    else if (key == "dma_off") c.dma_off = to_bool(key, val);
    else if (key == "mu_zero") c.mu_zero = to_bool(key, val);
    else if (key == "run_dir") c.run_dir = val;
    else throw std::invalid_argument(cat("line ", lineno, ": unknown key '", key, "'"));
  }
  c.validate();
  return c;
}

RunConfig load_config(const std::string& path) {
  RunConfig c = parse_config_text(read_text_file(path));
  if (const char* env = std::getenv("FEDPROPHET_SEED"); env && *env) {
    c.seed = to_uint64("FEDPROPHET_SEED", env);
  }
  return c;
}

void RunConfig::validate() const {
  check(preset == "mlp-4x64" || preset == "cnn-6", cat("unknown preset '", preset, "'"));
  check(dataset == "blobs" || dataset == "pattern" || dataset == "idx",
        cat("unknown dataset '", dataset, "'"));
  if (dataset == "blobs") {
    check(classes >= 2, cat("blobs need at least two classes, got ", classes));
    check(blob_dim >= (classes + 1) / 2,
          cat("blob_dim ", blob_dim, " too small for ", classes, " classes"));
    check(blob_sigma > 0, "blob_sigma must be positive");
  }
  if (dataset == "pattern")
    check(classes >= 2 && classes <= 4, cat("pattern images support 2..4 classes, got ", classes));
  if (dataset == "idx") {
    check(!idx_train_images.empty() && !idx_train_labels.empty(), "idx dataset needs train paths");
    check(!idx_test_images.empty() && !idx_test_labels.empty(), "idx dataset needs test paths");
  } else {
    check(train_per_class >= 1 && test_per_class >= 1, "per-class sample counts must be positive");
  }
  check(clients >= 1, cat("need at least one client, got ", clients));
  check(regime == "balanced" || regime == "unbalanced", cat("unknown regime '", regime, "'"));
  check(val_fraction > 0 && val_fraction < 0.5,
        cat("val_fraction must sit in (0, 0.5), got ", val_fraction));
  check(mu >= 0, cat("mu must be nonnegative, got ", mu));
  check(delta > 0 && delta < 1, cat("delta must sit in (0, 1), got ", delta));
  check(alpha_init >= 0 && alpha_init <= 2.0,
        cat("alpha_init must sit in [0, 2], got ", alpha_init));
  check(epsilon0 >= 0, cat("epsilon0 must be nonnegative, got ", epsilon0));
  check(pgd_train_steps >= 1 && pgd_eval_steps >= 1, "PGD step counts must be positive");
  check(lr >= 0, cat("lr must be nonnegative, got ", lr));
  check(momentum >= 0 && momentum < 1, cat("momentum must sit in [0, 1), got ", momentum));
  check(local_iterations >= 1, "need at least one local iteration");
  check(batch_size >= 1, "batch size must be positive");
  if (rounds_per_module.empty())
    check(rounds_total >= 1, cat("rounds_total must be positive, got ", rounds_total));
  for (int t : rounds_per_module) check(t >= 1, "per-module budgets must be positive");
  check(patience >= 1, cat("patience must be positive, got ", patience));
  check(min_delta >= 0, "min_delta cannot be negative");
  check(mode == "fedprophet" || mode == "joint-fat", cat("unknown mode '", mode, "'"));
  if (mode == "fedprophet") {
    bool frac = r_min_fraction > 0, abs = r_min_bytes > 0;
    check(frac != abs, "set exactly one of r_min_fraction and r_min_bytes");
    if (frac) check(r_min_fraction <= 1.0, "r_min_fraction cannot exceed the whole model");
  }
  check(!run_dir.empty(), "run_dir cannot be empty");
}

std::string render_config(const RunConfig& c) {
  std::ostringstream os;
  os << "preset = " << c.preset << "\n";
  os << "dataset = " << c.dataset << "\n";
  if (c.dataset == "blobs") {
    os << "blob_dim = " << c.blob_dim << "\n";
    os << "blob_sigma = " << fmt_double(c.blob_sigma) << "\n";
  }
  os << "classes = " << c.classes << "\n";
  if (c.dataset == "idx") {
    os << "idx_train_images = " << c.idx_train_images << "\n";
    os << "idx_train_labels = " << c.idx_train_labels << "\n";
    os << "idx_test_images = " << c.idx_test_images << "\n";
    os << "idx_test_labels = " << c.idx_test_labels << "\n";
  } else {
    os << "train_per_class = " << c.train_per_class << "\n";
    os << "test_per_class = " << c.test_per_class << "\n";
  }
  os << "clients = " << c.clients << "\n";
  os << "regime = " << c.regime << "\n";
  os << "val_fraction = " << fmt_double(c.val_fraction) << "\n";
  os << "seed = " << c.seed << "\n";
  os << "mu = " << fmt_double(c.mu) << "\n";
  os << "delta = " << fmt_double(c.delta) << "\n";
  os << "alpha_init = " << fmt_double(c.alpha_init) << "\n";
  os << "epsilon0 = " << fmt_double(c.epsilon0) << "\n";
  os << "pgd_train_steps = " << c.pgd_train_steps << "\n";
  os << "pgd_eval_steps = " << c.pgd_eval_steps << "\n";
  os << "lr = " << fmt_double(c.lr) << "\n";
  os << "momentum = " << fmt_double(c.momentum) << "\n";
  os << "local_iterations = " << c.local_iterations << "\n";
  os << "batch_size = " << c.batch_size << "\n";
  os << "rounds_total = " << c.rounds_total << "\n";
  if (!c.rounds_per_module.empty()) {
    os << "rounds_per_module =";
    for (int t : c.rounds_per_module) os << " " << t;
    os << "\n";
  }
  os << "patience = " << c.patience << "\n";
  os << "min_delta = " << fmt_double(c.min_delta) << "\n";
  if (c.r_min_fraction > 0) os << "r_min_fraction = " << fmt_double(c.r_min_fraction) << "\n";
  if (c.r_min_bytes > 0) os << "r_min_bytes = " << c.r_min_bytes << "\n";
  os << "mode = " << c.mode << "\n";
  os << "apa_off = " << (c.apa_off ? "true" : "false") << "\n";
  os << "dma_off = " << (c.dma_off ? "true" : "false") << "\n";
  os << "mu_zero = " << (c.mu_zero ? "true" : "false") << "\n";
  os << "run_dir = " << c.run_dir << "\n";
  return os.str();
}

}  // namespace fp
