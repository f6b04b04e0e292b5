#include "cosa/checkpoint.hpp"
#include "cosa/error.hpp"
#include "helpers.hpp"

#include <doctest.h>

using namespace cosa;
using nlohmann::json;

namespace {

template <class Net>
bool same_params(Net a, Net b) {
  const auto pa = nn::parameters(a), pb = nn::parameters(b);
  if (pa.size() != pb.size()) return false;
  for (std::size_t i = 0; i < pa.size(); ++i) {
    if (pa[i].name != pb[i].name || *pa[i].value != *pb[i].value) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("autoencoder checkpoint round trip") {
  testutil::TempDir dir("ckpt_ae");
  nn::AutoEncoder ae{nn::make_encoder(8, 5, 1), nn::make_decoder(5, 8, 12, 2)};
  save_autoencoder(dir.path() / "ae.json", ae);
  const nn::AutoEncoder back = load_autoencoder(dir.path() / "ae.json");
  CHECK(same_params(ae.encoder, back.encoder));
  CHECK(same_params(ae.decoder, back.decoder));
  CHECK(back.decoder.num_points() == 12);
  CHECK(to_json(back).dump() == to_json(ae).dump());
}

TEST_CASE("classifier checkpoint round trip") {
  testutil::TempDir dir("ckpt_clf");
  for (nn::Arch arch : {nn::Arch::A, nn::Arch::B, nn::Arch::C}) {
    const nn::Classifier c = nn::make_classifier(arch, 6, 4, 3, 5);
    save_classifier(dir.path() / "c.json", c);
    const nn::Classifier back = load_classifier(dir.path() / "c.json");
    CHECK(back.arch == arch);
    CHECK(back.num_classes == 4);
    CHECK(back.k == 5);
    CHECK(same_params(c, back));
  }
}

TEST_CASE("dictionary round trip") {
  testutil::TempDir dir("ckpt_dict");
  std::mt19937_64 rng(4);
  DictionarySet d;
  for (int y = 0; y < 3; ++y) {
    Eigen::MatrixXd a(4, 2);
    for (auto& v : a.reshaped()) v = std::uniform_real_distribution<double>(-1, 1)(rng);
    d[y] = PrototypeDictionary{y, a};
  }
  save_dictionaries(dir.path() / "d.json", d);
  const DictionarySet back = load_dictionaries(dir.path() / "d.json");
  REQUIRE(back.size() == 3);
  for (const auto& [y, dict] : d) CHECK(back.at(y).atoms == dict.atoms);
}

TEST_CASE("checkpoint rejection") {
  const nn::Classifier c = nn::make_classifier(nn::Arch::A, 6, 4, 3);
  const json good = to_json(c);
  CHECK_NOTHROW(classifier_from_json(good));

  json bad = good;
  bad["version"] = 99;
  CHECK_THROWS_AS(classifier_from_json(bad), ParseError);
  bad = good;
  bad["format"] = "other";
  CHECK_THROWS_AS(classifier_from_json(bad), ParseError);
  CHECK_THROWS_AS(autoencoder_from_json(good), ParseError);

  nn::AutoEncoder ae{nn::make_encoder(8, 5, 1), nn::make_decoder(5, 8, 12, 2)};
  json wrong = to_json(ae);
  wrong["shape"]["hidden"] = 9;
  CHECK_THROWS_AS(autoencoder_from_json(wrong), ParseError);
  wrong = to_json(ae);
  wrong["shape"]["num_points"] = 0;
  CHECK_THROWS_AS(autoencoder_from_json(wrong), ParseError);
  json bad_kind = to_json(c);
  bad_kind["arch"] = "D";
  CHECK_THROWS_AS(classifier_from_json(bad_kind), ParseError);

  testutil::TempDir dir("ckpt_bad");
  CHECK_THROWS(load_classifier(dir.path() / "missing.json"));
}
