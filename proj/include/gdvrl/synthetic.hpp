#pragma once

// Desk-scale synthetic corpus. Every article carries a 6-dimensional feature
// vector (one entry per evidence category) in its abstract payload; entry k
// is +signal when the article holds gold evidence of category k and -signal
// otherwise, plus Gaussian noise. The gold class follows from the number of
// distinct categories with evidence, so the label is recoverable from
// correct routing.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gdvrl/case_store.hpp"
#include "gdvrl/errors.hpp"
#include "gdvrl/evidence.hpp"
#include "gdvrl/random.hpp"

namespace gdvrl {

struct CorpusConfig {
  int cases = 200;
  int min_articles = 1;
  int max_articles = 3;
  /// Per-article probability of gold evidence in each category.
  std::array<double, kNumCategories> prevalence = {0.25, 0.2, 0.35, 0.3, 0.4, 0.25};
  double signal = 1.0;
  double noise = 0.6;
  /// Probability that a present category carries a second subtype.
  double second_subtype_rate = 0.2;
  double full_text_rate = 1.0;
  int panels = 10;
  /// Fractions of panels assigned to train and dev; the rest go to test.
  double train_panel_fraction = 0.6;
  double dev_panel_fraction = 0.2;

  void validate() const {
    if (cases <= 0) throw InvalidConfig("case count must be positive");
    if (min_articles <= 0 || max_articles < min_articles) throw InvalidConfig("invalid articles-per-case range");
    if (panels <= 0) throw InvalidConfig("panel count must be positive");
    for (double p : prevalence) {
      if (!(p >= 0.0 && p <= 1.0)) throw InvalidConfig("prevalence must lie in [0,1]");
    }
    for (double p : {second_subtype_rate, full_text_rate, train_panel_fraction, dev_panel_fraction}) {
      if (!(p >= 0.0 && p <= 1.0)) throw InvalidConfig("rates and fractions must lie in [0,1]");
    }
    if (train_panel_fraction + dev_panel_fraction > 1.0) throw InvalidConfig("split fractions exceed 1");
    if (!(noise >= 0.0) || !std::isfinite(signal)) throw InvalidConfig("noise must be nonnegative");
  }
};

/// Class rank = clamp(round(4/6 * distinct categories), 0, 4).
inline ValidityClass label_from_category_count(int distinct_categories) {
  const double scaled = (4.0 / 6.0) * distinct_categories;
  return validity_from_rank(std::clamp(static_cast<int>(std::lround(scaled)), 0, kMaxRank));
}

inline std::string panel_name(int index) {
  std::ostringstream os;
  os << "Panel-" << std::setw(2) << std::setfill('0') << index;
  return os.str();
}

inline std::vector<CaseRecord> generate_synthetic_corpus(const CorpusConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> n_articles(cfg.min_articles, cfg.max_articles);
  std::normal_distribution<double> noise(0.0, 1.0);

  std::vector<CaseRecord> cases;
  cases.reserve(static_cast<std::size_t>(cfg.cases));
  long long next_pmid = 30000001;
  for (int i = 0; i < cfg.cases; ++i) {
    CaseRecord c;
    std::ostringstream id;
    id << std::setw(4) << std::setfill('0') << i + 1;
    c.gene = "GENE" + id.str();
    c.disease = "synthetic disorder " + id.str();
    c.panel = panel_name(i % cfg.panels);

    const int n = n_articles(rng);
    for (int a = 0; a < n; ++a) {
      ArticleRecord art;
      art.pmid = std::to_string(next_pmid);
      art.pmcid = "PMC" + std::to_string(next_pmid + 7000000);
      ++next_pmid;

      json features = json::array();
      for (auto cat : kAllCategories) {
        const auto k = static_cast<std::size_t>(index_of(cat));
        const bool present = uniform01(rng) < cfg.prevalence[k];
        const double f = (present ? cfg.signal : -cfg.signal) + cfg.noise * noise(rng);
        features.push_back(f);
        if (!present) continue;
        const int count = subtype_count(cat);
        const int first = std::uniform_int_distribution<int>(0, count - 1)(rng);
        art.gold_findings.push_back({EvidenceSubtype{cat, first},
                                     "synthetic " + std::string(category_name(cat)) + " finding"});
        if (uniform01(rng) < cfg.second_subtype_rate) {
          const int second = (first + 1 + std::uniform_int_distribution<int>(0, count - 2)(rng)) % count;
          art.gold_findings.push_back({EvidenceSubtype{cat, second},
                                       "synthetic " + std::string(category_name(cat)) + " finding"});
        }
      }
      json payload = json::object();
      payload["features"] = std::move(features);
      payload["text"] = "Synthetic abstract for " + c.gene + ".";
      art.abstract_text = payload.dump();
      if (uniform01(rng) < cfg.full_text_rate) {
        art.full_text = "Synthetic full text of PMID " + art.pmid + " on " + c.gene + ".";
      }
      c.articles.push_back(std::move(art));
    }
    c.gold_class = label_from_category_count(gold_category_count(c));
    cases.push_back(std::move(c));
  }
  return cases;
}

/// Deterministic panel-level split for a synthetic corpus.
inline SplitAssignment synthetic_split(const CorpusConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  std::vector<int> order(static_cast<std::size_t>(cfg.panels));
  for (int i = 0; i < cfg.panels; ++i) order[static_cast<std::size_t>(i)] = i;
  std::mt19937_64 rng(seed ^ 0x5eed5b1175ULL);
  std::shuffle(order.begin(), order.end(), rng);
  const auto n_train = static_cast<int>(std::lround(cfg.train_panel_fraction * cfg.panels));
  const auto n_dev = static_cast<int>(std::lround(cfg.dev_panel_fraction * cfg.panels));
  SplitAssignment s;
  for (int i = 0; i < cfg.panels; ++i) {
    const auto split = i < n_train ? Split::Train : i < n_train + n_dev ? Split::Dev : Split::Test;
    s.panel_to_split[panel_name(order[static_cast<std::size_t>(i)])] = split;
  }
  return s;
}

/// Reads the feature vector out of a synthetic abstract payload. Abstracts
/// that are not such payloads yield a zero vector.
inline std::array<double, kNumCategories> article_features(const ArticleRecord& a) {
  std::array<double, kNumCategories> f{};
  const auto j = json::parse(a.abstract_text, nullptr, /*allow_exceptions=*/false);
  if (!j.is_object()) return f;
  const auto it = j.find("features");
  if (it == j.end() || !it->is_array() || it->size() != f.size()) return f;
  for (std::size_t k = 0; k < f.size(); ++k) {
    if ((*it)[k].is_number()) f[k] = (*it)[k].get<double>();
  }
  return f;
}

}  // namespace gdvrl
