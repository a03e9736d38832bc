#pragma once

#include <string>
#include <vector>

#include "atdt/scenegen/scenegen.hpp"

namespace atdt::scenegen {

struct ProxyConfig {
  double noise_sigma = 0.05;
  double hole_fraction = 0.1;
};

struct DatasetConfig {
  int n_train = 500;
  int n_val = 100;
  int n_test = 100;
  int height = 64;
  int width = 64;
  bool paired = false;  // debug mode: A and B share scene seeds
  GrammarConfig grammar;
  DomainStyle style_a = DomainStyle::default_a();
  DomainStyle style_b = DomainStyle::default_b();
  ProxyConfig proxy;

  void validate() const;
};

struct SplitSet {
  std::vector<Sample> train, val, test;
};

struct PairedDatasets {
  SplitSet a, b;
};

// Deterministic in (config, seed). Scene seeds are disjoint across splits
// and, unless `paired`, across domains: A and B are different scenes under
// different styles, not restyled copies.
PairedDatasets build_dataset(const DatasetConfig& config, uint64_t seed);

// On-disk layout: <dir>/<domain>/<split>/<index>_{image.ppm,depth.pgm,
// labels.pgm,mask.pgm} plus <dir>/manifest.json with seeds, splits and
// style parameters.
void write_dataset(const PairedDatasets& data, const DatasetConfig& config, uint64_t seed,
                   const std::string& dir);

}  // namespace atdt::scenegen
