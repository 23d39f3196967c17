#include "prodcat/checkpoint.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "prodcat/util.hpp"

using namespace prodcat;
namespace fs = std::filesystem;

namespace {

fs::path temp_path(const std::string& name) {
  fs::path dir = fs::temp_directory_path() / "prodcat_ckpt_tests";
  fs::create_directories(dir);
  return dir / name;
}

Checkpoint sample_checkpoint() {
  Checkpoint ckpt;
  ckpt.config.arch = models::Arch::bilstm;
  ckpt.config.vocab_size = 5;
  ckpt.config.embed_dim = 3;
  ckpt.config.max_len = 6;
  ckpt.config.spatial_dropout_rate = 0.2;
  ckpt.config.head_dropout = 0.25;
  ckpt.config.lstm_layers = {{4, 0.1}, {2, 0.0}};
  ckpt.config.head_sizes = {2, 2, 2, 2};
  ckpt.norm.min_token_len = 2;
  ckpt.norm.keep_chars = "-";
  for (int l = 0; l < 4; ++l) {
    ckpt.labels.labels[static_cast<std::size_t>(l)] = {"ALFA BETA", "GAMA"};
    ckpt.labels.index[static_cast<std::size_t>(l)] = {{"ALFA BETA", 0},
                                                      {"GAMA", 1}};
  }
  ckpt.vocab_tokens = {"sab", "johns", "baby"};
  ckpt.seed = 1234;
  models::BiLstmModel model(ckpt.config, 99);
  ckpt.params = snapshot_params(model);
  return ckpt;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::string data((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  return data;
}

}  // namespace

TEST_CASE("checkpoint round trip preserves everything") {
  Checkpoint ckpt = sample_checkpoint();
  fs::path path = temp_path("roundtrip.ckpt");
  ckpt.save(path);

  Checkpoint loaded = Checkpoint::load(path);
  CHECK(loaded.config.arch == ckpt.config.arch);
  CHECK(loaded.config.vocab_size == ckpt.config.vocab_size);
  CHECK(loaded.config.embed_dim == ckpt.config.embed_dim);
  CHECK(loaded.config.max_len == ckpt.config.max_len);
  CHECK(loaded.config.spatial_dropout_rate ==
        ckpt.config.spatial_dropout_rate);
  CHECK(loaded.config.head_dropout == ckpt.config.head_dropout);
  REQUIRE(loaded.config.lstm_layers.size() == 2);
  CHECK(loaded.config.lstm_layers[0].units == 4);
  CHECK(loaded.config.lstm_layers[0].dropout == 0.1);
  CHECK(loaded.norm.min_token_len == 2);
  CHECK(loaded.norm.keep_chars == "-");
  CHECK(loaded.norm.units == ckpt.norm.units);
  CHECK(loaded.labels.labels == ckpt.labels.labels);
  CHECK(loaded.vocab_tokens == ckpt.vocab_tokens);
  CHECK(loaded.seed == 1234);
  REQUIRE(loaded.params.size() == ckpt.params.size());
  for (std::size_t i = 0; i < loaded.params.size(); ++i) {
    CHECK(loaded.params[i].first == ckpt.params[i].first);
    CHECK(loaded.params[i].second == ckpt.params[i].second);
  }
}

TEST_CASE("saving twice is byte-identical") {
  Checkpoint ckpt = sample_checkpoint();
  fs::path a = temp_path("bytes_a.ckpt");
  fs::path b = temp_path("bytes_b.ckpt");
  ckpt.save(a);
  ckpt.save(b);
  CHECK(read_file(a) == read_file(b));
}

TEST_CASE("loader rejects bad magic and unknown version") {
  Checkpoint ckpt = sample_checkpoint();
  fs::path path = temp_path("tamper.ckpt");
  ckpt.save(path);

  std::string data = read_file(path);
  {
    std::string bad = data;
    bad[0] = 'X';
    std::ofstream out(temp_path("badmagic.ckpt"), std::ios::binary);
    out << bad;
  }
  CHECK_THROWS_WITH_AS(Checkpoint::load(temp_path("badmagic.ckpt")),
                       doctest::Contains("not a checkpoint"), DataError);
  {
    std::string bad = data;
    bad[4] = 2;
    std::ofstream out(temp_path("badversion.ckpt"), std::ios::binary);
    out << bad;
  }
  CHECK_THROWS_WITH_AS(Checkpoint::load(temp_path("badversion.ckpt")),
                       doctest::Contains("version"), DataError);
}

TEST_CASE("loader rejects a vocabulary hash mismatch") {
  Checkpoint ckpt = sample_checkpoint();
  fs::path path = temp_path("hash.ckpt");
  ckpt.save(path);
  std::string data = read_file(path);
  // corrupt one vocabulary token in the header without touching the hash
  std::size_t pos = data.find("vocab.0=sab");
  REQUIRE(pos != std::string::npos);
  data.replace(pos, 11, "vocab.0=sub");
  std::ofstream out(temp_path("hash_bad.ckpt"), std::ios::binary);
  out << data;
  out.close();
  CHECK_THROWS_WITH_AS(Checkpoint::load(temp_path("hash_bad.ckpt")),
                       doctest::Contains("hash mismatch"), DataError);
}

TEST_CASE("loader rejects truncated parameter data") {
  Checkpoint ckpt = sample_checkpoint();
  fs::path path = temp_path("trunc.ckpt");
  ckpt.save(path);
  std::string data = read_file(path);
  data.resize(data.size() - 9);
  std::ofstream out(temp_path("trunc_bad.ckpt"), std::ios::binary);
  out << data;
  out.close();
  CHECK_THROWS_WITH_AS(Checkpoint::load(temp_path("trunc_bad.ckpt")),
                       doctest::Contains("truncated"), DataError);
}

TEST_CASE("restore_model rebuilds a forward-identical model") {
  Checkpoint ckpt = sample_checkpoint();
  std::unique_ptr<models::Model> restored = restore_model(ckpt);

  // float32 storage round trip: restored equals the narrowed snapshot
  std::vector<models::NamedParam> live = restored->parameters();
  REQUIRE(live.size() == ckpt.params.size());
  for (std::size_t i = 0; i < live.size(); ++i) {
    CHECK(live[i].name == ckpt.params[i].first);
    for (std::size_t j = 0; j < live[i].tensor.size(); ++j) {
      CHECK(live[i].tensor.data()[j] ==
            static_cast<double>(ckpt.params[i].second[j]));
    }
  }

  ad::Tape tape(false);
  models::MultiHeadLogits a =
      restored->forward(tape, {{2, 3, 0, 0}}, false, nullptr);
  std::unique_ptr<models::Model> again = restore_model(ckpt);
  models::MultiHeadLogits b =
      again->forward(tape, {{2, 3, 0, 0}}, false, nullptr);
  for (std::size_t h = 0; h < 4; ++h) CHECK(a[h].data() == b[h].data());
}

TEST_CASE("vocabulary hash matches the standalone vocabulary") {
  Checkpoint ckpt = sample_checkpoint();
  CHECK(ckpt.vocab_hash() == ckpt.vocabulary().hash());
}
