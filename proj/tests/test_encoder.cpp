#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>

#include "support.hpp"

using namespace kdnli;
using namespace kdnli::testing;
using Catch::Matchers::WithinAbs;

TEST_CASE("vocabulary reserves pad, unk, bos and eos") {
    Vocabulary v({"dog", "cat"});
    CHECK(v.size() == 6);
    CHECK(v.token(Vocabulary::kPad) == "<pad>");
    CHECK(v.find("dog") == 4u);
    CHECK(v.id_or_unk("horse") == Vocabulary::kUnk);
    CHECK(v.words() == std::vector<std::string>{"dog", "cat"});
    CHECK_THROWS_AS(Vocabulary({"dog", "dog"}), DataError);
    CHECK_THROWS_AS(v.add("two words"), DataError);
    CHECK(v.fingerprint() != Vocabulary({"cat", "dog"}).fingerprint());
}

TEST_CASE("vocabulary file round trip") {
    const auto path = std::filesystem::temp_directory_path() / "kdnli_vocab_test.txt";
    const Vocabulary v({"alpha", "beta", "gamma"});
    v.save(path);
    CHECK(Vocabulary::load(path) == v);
    std::filesystem::remove(path);
}

TEST_CASE("tokenize wraps words in BOS/EOS") {
    const Vocabulary v({"a", "soccer", "game"});
    const auto ids = tokenize("A soccer game with multiple males playing", v, 128);
    REQUIRE(ids.size() == 9);  // 7 words plus BOS and EOS
    CHECK(ids.front() == Vocabulary::kBos);
    CHECK(ids.back() == Vocabulary::kEos);
    CHECK(ids[1] == *v.find("a"));
    CHECK(ids[3] == *v.find("game"));
    CHECK(ids[4] == Vocabulary::kUnk);
}

TEST_CASE("tokenize rejects empty input") {
    const Vocabulary v({"a"});
    CHECK_THROWS_AS(tokenize("", v, 128), EmptyInputError);
    CHECK_THROWS_AS(tokenize(" \t ", v, 128), EmptyInputError);
    CHECK_THROWS_AS(tokenize("a", v, 2), ArgumentError);
}

TEST_CASE("tokenize truncates long input to max_tokens_length") {
    const Vocabulary v({"w"});
    std::string text;
    for (int i = 0; i < 500; ++i) text += "w ";
    const auto ids = tokenize(text, v, 128, 10000);
    CHECK(ids.size() == 128);
    CHECK(ids.back() == Vocabulary::kEos);
    // The character limit applies first: 256 characters hold 128 words here.
    CHECK(tokenize(text, v, 1000, 256).size() == 130);
}

TEST_CASE("truncate_utf8 never splits a multi-byte sequence") {
    const std::string s = "caf\xC3\xA9";  // 5 bytes
    CHECK(truncate_utf8(s, 4) == "caf");
    CHECK(truncate_utf8(s, 5) == s);
}

TEST_CASE("encoder config validation") {
    auto cfg = tiny_config(10, 6, 1, 4);
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = tiny_config(3);
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    CHECK(EncoderConfig::full_scale(100).embed_dim == 768);
}

TEST_CASE("seeded initialisation is reproducible") {
    const auto cfg = tiny_config(20);
    const auto a = EncoderWeights<double>::init(cfg, 5).params();
    const auto b = EncoderWeights<double>::init(cfg, 5).params();
    const auto c = EncoderWeights<double>::init(cfg, 6).params();
    REQUIRE(a.size() == b.size());
    bool differs = false;
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].name == b[i].name);
        CHECK(std::equal(a[i].tensor.data().begin(), a[i].tensor.data().end(), b[i].tensor.data().begin()));
        differs = differs || !std::equal(a[i].tensor.data().begin(), a[i].tensor.data().end(),
                                         c[i].tensor.data().begin());
    }
    CHECK(differs);
}

TEST_CASE("without transformer layers the embedding is the mean of normalised input rows") {
    auto w = EncoderWeights<double>::init(tiny_config(12, 4), 3);
    w.layers.clear();
    const std::vector<std::size_t> ids{2, 7, 9, 3};
    const auto emb = encode(std::span<const std::size_t>(ids), w).vector;

    const std::size_t d = 4;
    std::vector<double> expected(d, 0.0);
    for (std::size_t r = 0; r < ids.size(); ++r) {
        std::vector<double> row(d);
        for (std::size_t c = 0; c < d; ++c) {
            const double angle = double(r) / std::pow(10000.0, double(c - c % 2) / double(d));
            const double pos = c % 2 == 0 ? std::sin(angle) : std::cos(angle);
            row[c] = w.token_embedding[ids[r] * d + c] * 2.0 + pos;
        }
        double mean = 0.0, var = 0.0;
        for (const double x : row) mean += x / d;
        for (const double x : row) var += (x - mean) * (x - mean) / d;
        for (std::size_t c = 0; c < d; ++c) expected[c] += (row[c] - mean) / std::sqrt(var + 1e-5) / ids.size();
    }
    for (std::size_t c = 0; c < d; ++c) CHECK_THAT(emb[c], WithinAbs(expected[c], 1e-12));
}

TEST_CASE("trailing PAD tokens do not change the embedding") {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const auto w = EncoderWeights<double>::init(tiny_config(30, 8, 2), seed);
        std::vector<std::size_t> ids{2, 11, 17, 5, 3};
        const auto base = encode(std::span<const std::size_t>(ids), w).vector;
        for (int pads = 1; pads <= 4; ++pads) {
            ids.push_back(Vocabulary::kPad);
            const auto padded = encode(std::span<const std::size_t>(ids), w).vector;
            for (std::size_t c = 0; c < 8; ++c) CHECK_THAT(padded[c], WithinAbs(base[c], 1e-6));
        }
    }
}

TEST_CASE("encode rejects bad sequences") {
    const auto w = EncoderWeights<double>::init(tiny_config(10), 1);
    const std::vector<std::size_t> empty;
    CHECK_THROWS_AS(encode(std::span<const std::size_t>(empty), w), TokenizationError);
    const std::vector<std::size_t> bad{2, 10, 3};
    CHECK_THROWS_AS(encode(std::span<const std::size_t>(bad), w), TokenizationError);
    const std::vector<std::size_t> too_long(17, 4);
    CHECK_THROWS_AS(encode(std::span<const std::size_t>(too_long), w), TokenizationError);
}

TEST_CASE("siamese encoding shares weights and keeps sentences independent") {
    const auto model = tiny_model<double>(4);
    const auto& enc = model.encoder;
    const auto [u, v] = enc.encode_pair("the dog runs", "the cat sleeps");
    const auto [v2, u2] = enc.encode_pair("the cat sleeps", "the dog runs");
    const auto alone = enc.encode("the dog runs");
    for (std::size_t c = 0; c < enc.embed_dim(); ++c) {
        CHECK(u.vector[c] == alone.vector[c]);
        CHECK(u.vector[c] == u2.vector[c]);
        CHECK(v.vector[c] == v2.vector[c]);
    }
    CHECK(u.source_text_hash == fnv1a64("the dog runs"));
}

TEST_CASE("the encoder counts its invocations") {
    auto model = tiny_model<float>(1);
    model.encoder.reset_invocation_count();
    model.encoder.encode("the dog runs");
    model.encoder.encode_pair("the dog runs", "the cat runs");
    CHECK(model.encoder.invocation_count() == 3);
}

TEST_CASE("deep copies do not share tensors") {
    const auto model = tiny_model<double>(2);
    auto copy = model.encoder.deep_copy();
    copy.weights().token_embedding.mutable_data()[0] += 1.0;
    CHECK(copy.weights().token_embedding[0] != model.encoder.weights().token_embedding[0]);
}

TEST_CASE("encoder gradients pass finite-difference checks", "[gradcheck]") {
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
        const auto w = EncoderWeights<double>::init(tiny_config(12, 4, 1, 2), seed);
        const std::vector<std::size_t> ids{2, 5, 8, 3};
        const auto target = random_tensor({4}, seed + 9, false);
        const auto loss = [&] { return mse_loss(encode(std::span<const std::size_t>(ids), w).vector, target); };
        std::vector<Tensor<double>> params;
        for (const auto& p : w.params()) params.push_back(p.tensor);
        CHECK(max_gradient_error(loss, params) < 1e-4);
    }
}
