#include "fp/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "fp/rng.hpp"
#include "fp/util.hpp"

namespace fp {

Tensor Dataset::batch_x(const std::vector<int>& rows) const {
  int64_t e = sample_elems();
  Shape s;
  s.push_back((int)rows.size());
  for (int d : sample_shape) s.push_back(d);
  Tensor t(s);
  for (size_t i = 0; i < rows.size(); ++i) {
    check(rows[i] >= 0 && rows[i] < n(), cat("dataset row ", rows[i], " out of range"));
    std::copy_n(x.data() + rows[i] * e, e, t.values().data() + i * e);
  }
  return t;
}

std::vector<int> Dataset::batch_y(const std::vector<int>& rows) const {
  std::vector<int> out(rows.size());
  for (size_t i = 0; i < rows.size(); ++i) out[i] = y[rows[i]];
  return out;
}

Tensor Dataset::full_x() const {
  std::vector<int> rows(n());
  for (int i = 0; i < n(); ++i) rows[i] = i;
  return batch_x(rows);
}

void Dataset::append_row(const Dataset& src, int row) {
  int64_t e = src.sample_elems();
  x.insert(x.end(), src.x.begin() + row * e, src.x.begin() + (row + 1) * e);
  y.push_back(src.y[row]);
  origin.push_back(src.origin.empty() ? row : src.origin[row]);
}

Dataset make_blobs(int classes, int dim, int n_per_class, uint64_t seed, double sigma) {
  check(classes >= 2, "need at least two classes");
  check(dim >= (classes + 1) / 2, cat("dim ", dim, " too small for ", classes, " blob means"));
  check(n_per_class > 0 && sigma > 0, "blob sizes and spread must be positive");
  Dataset d;
  d.sample_shape = {dim};
  d.classes = classes;
  Rng rng(derive_seed(seed, Stream::DataGen));
  for (int c = 0; c < classes; ++c)
    for (int i = 0; i < n_per_class; ++i) {
      for (int j = 0; j < dim; ++j) {
        double mean = (j == c / 2) ? (c % 2 == 0 ? 1.0 : -1.0) : 0.0;
        d.x.push_back(mean + sigma * rng.normal());
      }
      d.y.push_back(c);
    }
  return d;
}

Dataset make_pattern_images(int classes, int n_per_class, uint64_t seed) {
  check(classes >= 2 && classes <= 4, cat("pattern images support 2..4 classes, got ", classes));
  check(n_per_class > 0, "need a positive class size");
  Dataset d;
  d.sample_shape = {1, 8, 8};
  d.classes = classes;
  Rng rng(derive_seed(seed, Stream::DataGen, 1));
  for (int c = 0; c < classes; ++c)
    for (int i = 0; i < n_per_class; ++i) {
      int phase = (int)rng.index(2);
      for (int r = 0; r < 8; ++r)
        for (int col = 0; col < 8; ++col) {
          double base;
          switch (c) {
            case 0: base = (r + phase) % 2 ? 0.8 : 0.2; break;
            case 1: base = (col + phase) % 2 ? 0.8 : 0.2; break;
            case 2: base = (r + col + phase) % 2 ? 0.8 : 0.2; break;
            default: {
              double dr = r - 3.5, dc = col - 3.5;
              base = 1.0 - std::sqrt(dr * dr + dc * dc) / 5.0;
              if (phase) base = 1.0 - base;
            }
          }
          double v = base + rng.uniform(-0.15, 0.15);
          d.x.push_back(std::min(1.0, std::max(0.0, v)));
        }
      d.y.push_back(c);
    }
  return d;
}

namespace {

uint32_t read_be32(std::istream& in, const std::string& path) {
  unsigned char b[4];
  in.read((char*)b, 4);
  check(in.gcount() == 4, cat("truncated idx header in ", path));
  return (uint32_t)b[0] << 24 | (uint32_t)b[1] << 16 | (uint32_t)b[2] << 8 | b[3];
}

void write_be32(std::ostream& out, uint32_t v) {
  unsigned char b[4] = {(unsigned char)(v >> 24), (unsigned char)(v >> 16),
                        (unsigned char)(v >> 8), (unsigned char)v};
  out.write((char*)b, 4);
}

}  // namespace

Dataset load_idx(const std::string& images_path, const std::string& labels_path) {
  std::ifstream imgs(images_path, std::ios::binary);
  check(imgs.good(), cat("cannot open ", images_path));
  uint32_t magic = read_be32(imgs, images_path);
  check(magic == 0x00000803u,
        cat("bad magic in ", images_path, ": expected images magic 2051, got ", magic));
  uint32_t n = read_be32(imgs, images_path);
  uint32_t rows = read_be32(imgs, images_path);
  uint32_t cols = read_be32(imgs, images_path);
  std::vector<unsigned char> pix((size_t)n * rows * cols);
  imgs.read((char*)pix.data(), (std::streamsize)pix.size());
  check((size_t)imgs.gcount() == pix.size(), cat("truncated pixel data in ", images_path));

  std::ifstream labs(labels_path, std::ios::binary);
  check(labs.good(), cat("cannot open ", labels_path));
  uint32_t lmagic = read_be32(labs, labels_path);
  check(lmagic == 0x00000801u,
        cat("bad magic in ", labels_path, ": expected labels magic 2049, got ", lmagic));
  uint32_t ln = read_be32(labs, labels_path);
  check(ln == n, cat("count mismatch: ", n, " images vs ", ln, " labels"));
  std::vector<unsigned char> lab(ln);
  labs.read((char*)lab.data(), (std::streamsize)lab.size());
  check((size_t)labs.gcount() == lab.size(), cat("truncated label data in ", labels_path));

  Dataset d;
  d.sample_shape = {1, (int)rows, (int)cols};
  d.x.resize(pix.size());
  for (size_t i = 0; i < pix.size(); ++i) d.x[i] = pix[i] / 255.0;
  d.y.assign(lab.begin(), lab.end());
  int mx = 0;
  for (int v : d.y) mx = std::max(mx, v);
  d.classes = mx + 1;
  return d;
}

void save_idx(const Dataset& d, const std::string& images_path, const std::string& labels_path) {
  check(d.sample_shape.size() == 3 && d.sample_shape[0] == 1,
        cat("idx export needs single-channel images, got ", shape_str(d.sample_shape)));
  std::ofstream imgs(images_path, std::ios::binary);
  check(imgs.good(), cat("cannot write ", images_path));
  write_be32(imgs, 0x00000803u);
  write_be32(imgs, (uint32_t)d.n());
  write_be32(imgs, (uint32_t)d.sample_shape[1]);
  write_be32(imgs, (uint32_t)d.sample_shape[2]);
  for (double v : d.x) {
    check(v >= 0.0 && v <= 1.0, "idx export needs pixels in [0,1]");
    unsigned char b = (unsigned char)std::lround(v * 255.0);
    imgs.write((char*)&b, 1);
  }
  std::ofstream labs(labels_path, std::ios::binary);
  check(labs.good(), cat("cannot write ", labels_path));
  write_be32(labs, 0x00000801u);
  write_be32(labs, (uint32_t)d.n());
  for (int v : d.y) {
    check(v >= 0 && v < 256, "idx labels must fit one byte");
    unsigned char b = (unsigned char)v;
    labs.write((char*)&b, 1);
  }
}

std::vector<Shard> partition_20_80(const Dataset& data, int n_clients, uint64_t seed) {
  check(n_clients >= 1, "need at least one client");
  int C = data.classes;
  check(C >= 1 && data.n() > 0, "dataset is empty");
  check(data.n() >= n_clients * C,
        cat("need at least ", n_clients * C, " examples for ", n_clients, " clients, have ",
            data.n()));

  // per-class index pools, each deterministically shuffled
  std::vector<std::vector<int>> pool(C);
  for (int i = 0; i < data.n(); ++i) {
    check(data.y[i] >= 0 && data.y[i] < C, cat("label ", data.y[i], " out of range"));
    pool[data.y[i]].push_back(i);
  }
  for (int c = 0; c < C; ++c) {
    Rng rng(derive_seed(seed, Stream::Shard, (uint64_t)c));
    rng.shuffle(pool[c]);
  }

  int majors = (C + 4) / 5;  // ceil(0.2*C)
  std::vector<Shard> shards(n_clients);
  std::vector<std::vector<int>> want(n_clients, std::vector<int>(C, 0));
  for (int k = 0; k < n_clients; ++k) {
    int n_k = data.n() / n_clients + (k < data.n() % n_clients ? 1 : 0);
    int major_mass = (int)std::llround(0.8 * n_k);
    int minor_mass = n_k - major_mass;
    for (int j = 0; j < majors; ++j) {
      int c = (k * majors + j) % C;
      want[k][c] += major_mass / majors + (j < major_mass % majors ? 1 : 0);
    }
    int minors = C - majors;
    if (minors == 0) {
      want[k][(k * majors) % C] += minor_mass;
    } else {
      for (int j = 0; j < minors; ++j) {
        int c = (k * majors + majors + j) % C;
        want[k][c] += minor_mass / minors + (j < minor_mass % minors ? 1 : 0);
      }
    }
  }

  for (int k = 0; k < n_clients; ++k) {
    Shard& s = shards[k];
    s.client = k;
    s.train.sample_shape = data.sample_shape;
    s.train.classes = C;
    s.val = s.train;
    int deficit = 0;
    for (int c = 0; c < C; ++c) {
      int take = std::min<int>(want[k][c], (int)pool[c].size());
      deficit += want[k][c] - take;
      for (int i = 0; i < take; ++i) {
        s.train.append_row(data, pool[c].back());
        pool[c].pop_back();
      }
    }
    // dry pools: backfill from whichever class still has the most left
    for (int i = 0; i < deficit; ++i) {
      int best = 0;
      for (int c = 1; c < C; ++c)
        if (pool[c].size() > pool[best].size()) best = c;
      check(!pool[best].empty(), "partition ran out of examples");
      s.train.append_row(data, pool[best].back());
      pool[best].pop_back();
    }
    s.histogram.assign(C, 0);
    for (int v : s.train.y) ++s.histogram[v];
  }
  recompute_weights(shards);
  return shards;
}

void split_validation(Shard& shard, double fraction, uint64_t seed) {
  check(fraction > 0.0 && fraction < 0.5,
        cat("validation fraction must sit in (0, 0.5), got ", fraction));
  Dataset& tr = shard.train;
  check(tr.n() >= 2, cat("shard of ", tr.n(), " examples cannot spare validation data"));
  check(shard.val.n() == 0, "shard already carries a validation split");

  int C = tr.classes;
  std::vector<std::vector<int>> rows(C);
  for (int i = 0; i < tr.n(); ++i) rows[tr.y[i]].push_back(i);
  std::vector<int> val_rows;
  int largest = 0;
  for (int c = 0; c < C; ++c) {
    if (rows[c].size() > rows[largest].size()) largest = c;
    Rng rng(derive_seed(seed, Stream::ValSplit, (uint64_t)c));
    rng.shuffle(rows[c]);
    int take = (int)std::llround(fraction * rows[c].size());
    for (int i = 0; i < take; ++i) val_rows.push_back(rows[c][i]);
  }
  if (val_rows.empty()) val_rows.push_back(rows[largest][0]);  // always hold out something

  std::vector<char> to_val(tr.n(), 0);
  for (int r : val_rows) to_val[r] = 1;
  Dataset new_train;
  new_train.sample_shape = tr.sample_shape;
  new_train.classes = C;
  shard.val = new_train;
  for (int i = 0; i < tr.n(); ++i) (to_val[i] ? shard.val : new_train).append_row(tr, i);
  shard.train = std::move(new_train);
}

void recompute_weights(std::vector<Shard>& shards) {
  int64_t total = 0;
  for (const Shard& s : shards) total += s.train.n();
  check(total > 0, "fleet holds no training data");
  for (Shard& s : shards) s.q = (double)s.train.n() / (double)total;
}

}  // namespace fp
