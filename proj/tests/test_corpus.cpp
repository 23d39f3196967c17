#include "prodcat/corpus.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include "prodcat/textnorm.hpp"
#include "prodcat/util.hpp"

using namespace prodcat;
namespace fs = std::filesystem;

namespace {

fs::path temp_file(const std::string& name, const std::string& content) {
  fs::path dir = fs::temp_directory_path() / "prodcat_corpus_tests";
  fs::create_directories(dir);
  fs::path path = dir / name;
  std::ofstream out(path, std::ios::binary);
  out << content;
  return path;
}

const std::string kHeader =
    "nm_item;segmento;categoria;subcategoria;nm_product\n";

corpus::RawRecord raw(const std::string& item, const std::string& seg,
                      const std::string& cat, const std::string& sub,
                      const std::string& prod) {
  corpus::RawRecord r;
  r.item = item;
  r.labels = {seg, cat, sub, prod};
  r.source = "test";
  return r;
}

}  // namespace

TEST_CASE("load_csv maps columns and rejects bad rows") {
  fs::path path = temp_file("basic.csv",
                            kHeader +
                                "cueca sunga lupo g817;FASHION E "
                                "ESPORTIVO;VESTUARIO;MODA INTIMA;CUECA\n"
                                "carne suin espinhaco 1kg;BENS DE "
                                "CONSUMO;ACOUGUE E PEIXARIA;ACOUGUE;CARNE "
                                "SUINA\n"
                                "whisky johnn walker;BENS DE CONSUMO;BEBIDAS "
                                "ALCOOLICAS;DESTILADOS;WHISKY\n");
  corpus::LoadResult result = corpus::load_csv(path, corpus::ColumnMap{});
  CHECK(result.records.size() == 3);
  CHECK(result.rejected.empty());
  CHECK(result.records[0].item == "cueca sunga lupo g817");
  CHECK(result.records[0].labels[0] == "FASHION E ESPORTIVO");
  CHECK(result.records[2].labels[3] == "WHISKY");
}

TEST_CASE("load_csv rejects missing fields and wrong field counts") {
  fs::path path = temp_file("reject.csv", kHeader +
                                              "item a;SEG;CAT;;PROD\n"
                                              "a;b;c\n"
                                              "item b;SEG;CAT;SUB;PROD\n");
  corpus::LoadResult result = corpus::load_csv(path, corpus::ColumnMap{});
  CHECK(result.records.size() == 1);
  REQUIRE(result.rejected.size() == 2);
  CHECK(result.rejected[0].reason == "missing_field");
  CHECK(result.rejected[1].reason == "field_count");
}

TEST_CASE("load_csv errors") {
  CHECK_THROWS_AS(corpus::load_csv("/nonexistent/file.csv",
                                   corpus::ColumnMap{}),
                  IoError);
  fs::path path = temp_file("badheader.csv", "a;b;c\n1;2;3\n");
  CHECK_THROWS_WITH_AS(corpus::load_csv(path, corpus::ColumnMap{}),
                       doctest::Contains("nm_item"), DataError);
}

TEST_CASE("load_csv honors quoting and custom delimiter") {
  fs::path path = temp_file(
      "quoted.csv",
      "nm_item,segmento,categoria,subcategoria,nm_product\n"
      "\"item, with comma\",SEG,CAT,SUB,\"PROD \"\"X\"\"\"\n");
  corpus::LoadResult result = corpus::load_csv(path, corpus::ColumnMap{}, ',');
  REQUIRE(result.records.size() == 1);
  CHECK(result.records[0].item == "item, with comma");
  CHECK(result.records[0].labels[3] == "PROD \"X\"");
}

TEST_CASE("clean normalizes, uppercases, dedups") {
  textnorm::Normalizer norm;
  std::vector<corpus::RawRecord> rows = {
      raw("CUECA SUNGA LUPO G817", "Fashion e Esportivo", "VESTUARIO",
          "MODA INTIMA", "CUECA"),
      raw("CUECA SUNGA LUPO G817", "Fashion e Esportivo", "VESTUARIO",
          "MODA INTIMA", "CUECA"),
      raw("...", "SEG", "CAT", "SUB", "PROD"),  // normalizes to nothing
      raw("item ok", "SEG", "", "SUB", "PROD"),  // missing label
  };
  corpus::CleanStats stats;
  corpus::Corpus c = corpus::clean(rows, norm, &stats);
  REQUIRE(c.size() == 1);
  CHECK(c.records[0].item_text == "cueca sunga lupo g817");
  CHECK(c.records[0].labels[0] == "FASHION E ESPORTIVO");
  CHECK(stats.dropped_duplicates == 1);
  CHECK(stats.dropped_empty_text == 1);
  CHECK(stats.dropped_missing == 1);
  CHECK(stats.input_rows == 4);
}

TEST_CASE("clean with 1000 rows and one missing field") {
  textnorm::Normalizer norm;
  std::vector<corpus::RawRecord> rows;
  for (int i = 0; i < 1000; ++i) {
    rows.push_back(raw("item numero " + std::to_string(i), "SEG", "CAT", "SUB",
                       "PROD" + std::to_string(i)));
  }
  rows[500].labels[2].clear();
  corpus::CleanStats stats;
  corpus::Corpus c = corpus::clean(rows, norm, &stats);
  CHECK(c.size() == 999);
  CHECK(stats.dropped_missing == 1);
}

TEST_CASE("clean is identical across thread counts") {
  textnorm::Normalizer norm;
  std::vector<corpus::RawRecord> rows;
  for (int i = 0; i < 200; ++i) {
    rows.push_back(raw("Produto Número " + std::to_string(i) + " 80ghora",
                       "SEG", "CAT", "SUB", "PROD" + std::to_string(i % 7)));
  }
  corpus::Corpus c1 = corpus::clean(rows, norm, nullptr, 1);
  corpus::Corpus c4 = corpus::clean(rows, norm, nullptr, 4);
  REQUIRE(c1.size() == c4.size());
  for (std::size_t i = 0; i < c1.size(); ++i) {
    CHECK(c1.records[i].item_text == c4.records[i].item_text);
  }
}

TEST_CASE("merge_augmentation combines, harmonizes, dedups") {
  textnorm::Normalizer norm;
  std::vector<corpus::RawRecord> base_rows, extra_rows;
  for (int i = 0; i < 100; ++i) {
    base_rows.push_back(raw("base item " + std::to_string(i), "SEG", "CAT",
                            "SUB", "PROD"));
  }
  corpus::Corpus base = corpus::clean(base_rows, norm);

  SUBCASE("no overlap") {
    for (int i = 0; i < 30; ++i) {
      extra_rows.push_back(raw("extra item " + std::to_string(i), "SEG", "CAT",
                               "SUB", "PROD"));
    }
    corpus::Corpus extra = corpus::clean(extra_rows, norm);
    corpus::Corpus merged = corpus::merge_augmentation(base, extra, {});
    CHECK(merged.size() == 130);
  }

  SUBCASE("10 duplicates of base are removed") {
    for (int i = 0; i < 20; ++i) {
      extra_rows.push_back(raw("extra item " + std::to_string(i), "SEG", "CAT",
                               "SUB", "PROD"));
    }
    for (int i = 0; i < 10; ++i) {
      extra_rows.push_back(raw("base item " + std::to_string(i), "SEG", "CAT",
                               "SUB", "PROD"));
    }
    corpus::Corpus extra = corpus::clean(extra_rows, norm);
    corpus::MergeStats stats;
    corpus::Corpus merged = corpus::merge_augmentation(base, extra, {}, &stats);
    CHECK(merged.size() == 120);
    CHECK(stats.duplicates_removed == 10);
  }

  SUBCASE("label harmonization map rewrites and reports unmapped") {
    extra_rows.push_back(raw("cerveja lata", "SEG", "BEBIDAS", "SUB", "PROD"));
    corpus::Corpus extra = corpus::clean(extra_rows, norm);
    corpus::LabelMap map{{"BEBIDAS", "BEBIDAS ALCOOLICAS"}};
    corpus::MergeStats stats;
    corpus::Corpus merged = corpus::merge_augmentation(base, extra, map,
                                                       &stats);
    CHECK(merged.records.back().labels[1] == "BEBIDAS ALCOOLICAS");
    // SEG, SUB, PROD are distinct unmapped labels of `extra`
    CHECK(stats.unmapped_labels == 3);
  }
}

TEST_CASE("stratified_split partitions exactly by ratio") {
  textnorm::Normalizer norm;
  std::vector<corpus::RawRecord> rows;
  for (int i = 0; i < 100; ++i) {
    rows.push_back(raw("registro unico " + std::to_string(i), "SEG", "CAT",
                       "SUB", "PROD"));
  }
  corpus::Corpus c = corpus::clean(rows, norm);
  corpus::SplitSpec spec;
  spec.ratios = {0.7, 0.15, 0.15};
  spec.seed = 11;
  corpus::Splits s = corpus::stratified_split(c, spec);
  CHECK(s.train.size() == 70);
  CHECK(s.val.size() == 15);
  CHECK(s.test.size() == 15);
}

TEST_CASE("stratified_split sends tiny strata to train") {
  textnorm::Normalizer norm;
  std::vector<corpus::RawRecord> rows = {
      raw("registro um", "SEG", "CAT", "SUB", "RARO"),
      raw("registro dois", "SEG", "CAT", "SUB", "RARO"),
  };
  corpus::Corpus c = corpus::clean(rows, norm);
  corpus::SplitSpec spec;
  spec.seed = 1;
  corpus::Splits s = corpus::stratified_split(c, spec);
  CHECK(s.train.size() == 2);
  CHECK(s.val.size() == 0);
  CHECK(s.test.size() == 0);
}

TEST_CASE("stratified_split: 10 strata x 20 records at 0.8/0.1/0.1") {
  textnorm::Normalizer norm;
  std::vector<corpus::RawRecord> rows;
  for (int p = 0; p < 10; ++p) {
    for (int i = 0; i < 20; ++i) {
      rows.push_back(raw("produto " + std::to_string(p) + " variante " +
                             std::to_string(i),
                         "SEG", "CAT", "SUB", "PROD" + std::to_string(p)));
    }
  }
  corpus::Corpus c = corpus::clean(rows, norm);
  corpus::SplitSpec spec;
  spec.ratios = {0.8, 0.1, 0.1};
  spec.seed = 5;
  corpus::Splits s = corpus::stratified_split(c, spec);
  CHECK(s.train.size() == 160);
  CHECK(s.val.size() == 20);
  CHECK(s.test.size() == 20);
  // each stratum splits 16/2/2
  for (int p = 0; p < 10; ++p) {
    std::string label = "PROD" + std::to_string(p);
    auto count = [&](const corpus::Corpus& part) {
      std::size_t n = 0;
      for (const auto& rec : part.records) n += rec.labels[3] == label;
      return n;
    };
    CHECK(count(s.train) == 16);
    CHECK(count(s.val) == 2);
    CHECK(count(s.test) == 2);
  }
}

TEST_CASE("stratified_split partition invariants and determinism") {
  textnorm::Normalizer norm;
  std::vector<corpus::RawRecord> rows;
  Rng rng(77);
  for (int i = 0; i < 157; ++i) {
    rows.push_back(raw("registro numero " + std::to_string(i), "SEG", "CAT",
                       "SUB", "PROD" + std::to_string(rng.below(9))));
  }
  corpus::Corpus c = corpus::clean(rows, norm);
  corpus::SplitSpec spec;
  spec.seed = 42;
  corpus::Splits a = corpus::stratified_split(c, spec);
  corpus::Splits b = corpus::stratified_split(c, spec);

  CHECK(a.train.size() + a.val.size() + a.test.size() == c.size());

  std::set<std::string> seen;
  for (const corpus::Corpus* part : {&a.train, &a.val, &a.test}) {
    for (const auto& rec : part->records) {
      CHECK(seen.insert(rec.item_text).second);  // pairwise disjoint
    }
  }
  auto texts = [](const corpus::Corpus& part) {
    std::vector<std::string> out;
    for (const auto& rec : part.records) out.push_back(rec.item_text);
    return out;
  };
  CHECK(texts(a.train) == texts(b.train));
  CHECK(texts(a.val) == texts(b.val));
  CHECK(texts(a.test) == texts(b.test));

  corpus::Splits other = corpus::stratified_split(
      c, corpus::SplitSpec{{0.7, 0.15, 0.15}, 43, corpus::Level::product});
  CHECK(texts(a.train) != texts(other.train));  // seed matters
}

TEST_CASE("stratified_split validation") {
  corpus::Corpus empty;
  CHECK_THROWS_AS(corpus::stratified_split(empty, corpus::SplitSpec{}),
                  DataError);
  corpus::SplitSpec bad;
  bad.ratios = {0.5, 0.5, 0.5};
  CHECK_THROWS_AS(bad.validate(), DataError);
}

TEST_CASE("label_space builds sorted bijective index maps") {
  textnorm::Normalizer norm;
  std::vector<corpus::RawRecord> rows = {
      raw("cueca sunga lupo g817", "FASHION E ESPORTIVO", "VESTUARIO",
          "MODA INTIMA", "CUECA"),
      raw("carne suin espinhaco 1kg", "BENS DE CONSUMO", "ACOUGUE E PEIXARIA",
          "ACOUGUE", "CARNE SUINA"),
      raw("whisky johnn walker", "BENS DE CONSUMO", "BEBIDAS ALCOOLICAS",
          "DESTILADOS", "WHISKY"),
  };
  corpus::Corpus c = corpus::clean(rows, norm);
  corpus::LabelSpace space = corpus::label_space(c);
  CHECK(space.size(corpus::Level::segment) == 2);
  CHECK(space.labels[0] ==
        std::vector<std::string>{"BENS DE CONSUMO", "FASHION E ESPORTIVO"});
  CHECK(space.size(corpus::Level::category) == 3);
  CHECK(space.size(corpus::Level::product) == 3);
  for (int l = 0; l < corpus::kNumLevels; ++l) {
    const auto& labels = space.labels[static_cast<std::size_t>(l)];
    for (std::size_t i = 0; i < labels.size(); ++i) {
      CHECK(space.id(static_cast<corpus::Level>(l), labels[i]) ==
            static_cast<int>(i));
    }
  }
  CHECK(space.id(corpus::Level::segment, "NOPE") == -1);

  corpus::Corpus single;
  single.records.push_back(c.records[0]);
  corpus::LabelSpace one = corpus::label_space(single);
  for (int l = 0; l < corpus::kNumLevels; ++l) {
    CHECK(one.size(static_cast<corpus::Level>(l)) == 1);
  }
}

TEST_CASE("write_csv round-trips through load_csv") {
  textnorm::Normalizer norm;
  std::vector<corpus::RawRecord> rows = {
      raw("item com acento çã", "SEG", "CAT", "SUB", "PROD"),
      raw("outro item 80ghora", "SEG2", "CAT2", "SUB2", "PROD2"),
  };
  corpus::Corpus c = corpus::clean(rows, norm);
  fs::path path = fs::temp_directory_path() / "prodcat_corpus_tests" /
                  "roundtrip.csv";
  fs::create_directories(path.parent_path());
  corpus::write_csv(path, c, corpus::ColumnMap{});
  corpus::LoadResult loaded = corpus::load_csv(path, corpus::ColumnMap{});
  REQUIRE(loaded.records.size() == c.size());
  for (std::size_t i = 0; i < c.size(); ++i) {
    CHECK(loaded.records[i].item == c.records[i].item_text);
    CHECK(loaded.records[i].labels == c.records[i].labels);
  }
}
