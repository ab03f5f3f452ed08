#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <sstream>

#include "csnet/checkpoint.hpp"
#include "csnet/eval.hpp"
#include "model_fixtures.hpp"

using namespace csnet;
using csnet::testing::tiny_config;

namespace {

std::string serialise(const Model& m) {
    std::ostringstream out(std::ios::binary);
    write_records(out, model_records(m));
    return out.str();
}

Model deserialise(const std::string& bytes) {
    std::istringstream in(bytes, std::ios::binary);
    return model_from_records(read_records(in));
}

bool same_parameters(const Model& a, const Model& b) {
    const auto pa = a.parameters(), pb = b.parameters();
    if (pa.size() != pb.size()) return false;
    for (std::size_t i = 0; i < pa.size(); ++i) {
        if (pa[i].name != pb[i].name || pa[i].tensor.shape() != pb[i].tensor.shape()) return false;
        const auto da = pa[i].tensor.data(), db = pb[i].tensor.data();
        if (!std::equal(da.begin(), da.end(), db.begin(), db.end())) return false;
    }
    return true;
}

}  // namespace

TEST(Checkpoint, RoundTripIsBitExactForEveryDecoder) {
    for (auto kind : {DecoderKind::FC, DecoderKind::CONV_INDEXED, DecoderKind::FLOW}) {
        for (bool stochastic : {true, false}) {
            auto c = tiny_config(kind);
            c.stochastic = stochastic;
            Model m(c, 5);
            csnet::testing::jitter_parameters(m, 5);
            const std::string bytes = serialise(m);
            const Model back = deserialise(bytes);
            EXPECT_TRUE(same_parameters(m, back));
            EXPECT_EQ(back.config().decoder, kind);
            EXPECT_EQ(back.config().stochastic, stochastic);
            EXPECT_EQ(back.config().encoder_channels, c.encoder_channels);
            EXPECT_EQ(serialise(back), bytes);
        }
    }
}

TEST(Checkpoint, RestoredModelPredictsIdentically) {
    const auto c = tiny_config(DecoderKind::FLOW);
    Model m(c, 8);
    csnet::testing::jitter_parameters(m, 8);
    const Model back = deserialise(serialise(m));
    Rng rng(8);
    const Sample s = csnet::testing::tiny_sample(c, rng);
    const auto a = predict_samples(m, s, 4, 1, 0), b = predict_samples(back, s, 4, 1, 0);
    for (std::size_t i = 0; i < 4; ++i) {
        const auto pa = a.samples[i].prediction.data(), pb = b.samples[i].prediction.data();
        EXPECT_TRUE(std::equal(pa.begin(), pa.end(), pb.begin(), pb.end()));
    }
}

TEST(Checkpoint, FileRoundTrip) {
    const auto dir = std::filesystem::temp_directory_path() / "csnet_ckpt_test";
    std::filesystem::create_directories(dir);
    Model m(tiny_config(DecoderKind::CONV_INDEXED), 2);
    save_checkpoint(m, dir / "m.csnc");
    EXPECT_TRUE(same_parameters(m, load_checkpoint(dir / "m.csnc")));
    EXPECT_THROW(load_checkpoint(dir / "missing.csnc"), FormatError);
    std::filesystem::remove_all(dir);
}

TEST(Checkpoint, HeaderLayout) {
    const std::string b = serialise(Model(tiny_config(DecoderKind::FC), 1));
    EXPECT_EQ(b.substr(0, 4), "CSNC");
    EXPECT_EQ(static_cast<unsigned char>(b[4]), kCheckpointVersion);
}

TEST(Checkpoint, CorruptionIsAFormatError) {
    const std::string b = serialise(Model(tiny_config(DecoderKind::FC), 1));
    auto expect_format_error = [](const std::string& bytes) {
        std::istringstream in(bytes, std::ios::binary);
        EXPECT_THROW(model_from_records(read_records(in)), FormatError);
    };
    std::string bad = b;
    bad[1] = 'Z';
    expect_format_error(bad);
    bad = b;
    bad[4] = 2;
    expect_format_error(bad);
    expect_format_error(b.substr(0, b.size() - 3));
    expect_format_error(b.substr(0, 6));
    expect_format_error("");
}

TEST(Checkpoint, MissingOrMisshapedRecords) {
    auto records = model_records(Model(tiny_config(DecoderKind::FC), 1));
    auto without_config = records;
    std::erase_if(without_config, [](const auto& r) { return r.name == "config.latent_dim"; });
    EXPECT_THROW(model_from_records(without_config), FormatError);

    auto misshaped = records;
    for (auto& r : misshaped)
        if (r.name.rfind("encoder.", 0) == 0) {
            r.shape = {r.values.size() + 1};
            r.values.push_back(0.0);
            break;
        }
    EXPECT_THROW(model_from_records(misshaped), FormatError);

    auto missing_param = records;
    missing_param.pop_back();
    EXPECT_THROW(model_from_records(missing_param), FormatError);

    CheckpointRecord broken{"x", {3}, {1.0}};
    std::ostringstream out;
    EXPECT_THROW(write_records(out, {broken}), ShapeError);
}

TEST(Checkpoint, GenericRecordsRoundTrip) {
    const std::vector<CheckpointRecord> recs = {{"a", {2, 2}, {1, 2, 3, 4}}, {"b.c", {1}, {-0.0}}};
    std::ostringstream out(std::ios::binary);
    write_records(out, recs);
    std::istringstream in(out.str(), std::ios::binary);
    const auto back = read_records(in);
    ASSERT_EQ(back.size(), 2u);
    EXPECT_EQ(back[0], recs[0]);
    EXPECT_TRUE(std::signbit(back[1].values[0]));
}
