// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <set>

#include "eresfd/config.hpp"
#include "eresfd/image.hpp"
#include "eresfd/weights.hpp"
#include "oracles.hpp"

using namespace eresfd;

namespace {

std::filesystem::path temp_path(const std::string& name) {
    return std::filesystem::temp_directory_path() / ("eresfd_test_" + name);
}

WeightStore one_tensor_store(const std::string& name) {
    std::mt19937 rng(1);
    WeightTensor t;
    t.dims = {16, 3, 5, 5};
    t.values = oracle::random_vector(1200, rng);
    WeightStore s;
    s.add(name, std::move(t));
    return s;
}

WeightFormatErrorCode decode_error(const std::vector<std::uint8_t>& bytes) {
    try {
        decode_weights(bytes);
    } catch (const WeightFormatError& e) {
        return e.code;
    }
    ADD_FAILURE() << "decode succeeded";
    return WeightFormatErrorCode::kBadMagic;
}

void put_u32(std::vector<std::uint8_t>& b, std::size_t at, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) b[at + i] = static_cast<std::uint8_t>(v >> (8 * i));
}

}  // namespace

TEST(Container, EmptyRoundTrip) {
    const auto bytes = encode_weights(WeightStore{});
    EXPECT_EQ(bytes.size(), 12u);
    EXPECT_TRUE(decode_weights(bytes).store.empty());
}

TEST(Container, ByteAccounting) {
    const std::string name = "stem.conv0.weight";
    const auto bytes = encode_weights(one_tensor_store(name));
    EXPECT_EQ(bytes.size(), 4u + 4 + 4 + (2 + name.size()) + 1 + 16 + 4 * 1200);
    EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "ERFD");
    EXPECT_EQ(bytes[4], 1);
    const auto with_sums = encode_weights(one_tensor_store(name), true);
    EXPECT_EQ(with_sums.size(), bytes.size() + 4 + 4 + 4);
}

TEST(Container, FileRoundTripIsByteIdentical) {
    const ModelGraph g = build_model(ModelConfig::eresfd());
    const WeightStore w = make_random_weights(g, 42);
    const auto path = temp_path("weights.erfd");
    save_weights(w, path, true);
    const LoadedWeights loaded = load_weights_with_checksums(path);
    EXPECT_EQ(loaded.store, w);
    EXPECT_TRUE(audit_checksums(loaded).empty());
    EXPECT_EQ(encode_weights(loaded.store, true), encode_weights(w, true));
    std::filesystem::remove(path);
}

TEST(Container, ChecksumFlagsCorruptedPayload) {
    const std::string name = "t";
    auto bytes = encode_weights(one_tensor_store(name), true);
    const std::size_t payload = 12 + 2 + name.size() + 1 + 16;
    bytes[payload + 123] ^= 0x01;
    const LoadedWeights loaded = decode_weights(bytes);
    EXPECT_EQ(audit_checksums(loaded), std::vector<std::string>{name});
}

TEST(Container, DistinctErrorCodes) {
    const auto good = encode_weights(one_tensor_store("w"));
    auto bad_magic = good;
    bad_magic[0] = 'X';
    EXPECT_EQ(decode_error(bad_magic), WeightFormatErrorCode::kBadMagic);

    auto bad_version = good;
    put_u32(bad_version, 4, 99);
    EXPECT_EQ(decode_error(bad_version), WeightFormatErrorCode::kUnsupportedVersion);

    auto truncated = good;
    truncated.resize(truncated.size() - 3);
    EXPECT_EQ(decode_error(truncated), WeightFormatErrorCode::kTruncated);

    auto bad_rank = good;
    bad_rank[12 + 2 + 1] = 5;
    EXPECT_EQ(decode_error(bad_rank), WeightFormatErrorCode::kBadRank);

    auto trailing = good;
    trailing.push_back(0);
    EXPECT_EQ(decode_error(trailing), WeightFormatErrorCode::kTrailingBytes);

    // Two copies of the same record with the count bumped to 2.
    auto dup = good;
    dup.insert(dup.end(), good.begin() + 12, good.end());
    put_u32(dup, 8, 2);
    EXPECT_EQ(decode_error(dup), WeightFormatErrorCode::kDuplicateName);

    auto sums = encode_weights(one_tensor_store("w"), true);
    put_u32(sums, sums.size() - 8, 3);
    EXPECT_EQ(decode_error(sums), WeightFormatErrorCode::kLengthMismatch);
}

TEST(Container, MissingFileThrows) {
    EXPECT_ANY_THROW(load_weights(temp_path("does_not_exist.erfd")));
}

TEST(Manifest, NamesFollowNodeIds) {
    const ModelGraph g = build_model(ModelConfig::eresfd());
    const auto manifest = weight_manifest(g);
    std::set<std::string> names;
    for (const auto& r : manifest) names.insert(r.name);
    EXPECT_EQ(names.size(), manifest.size());
    EXPECT_TRUE(names.count("stem.conv0.weight"));
    EXPECT_TRUE(names.count("stem.conv0.bias"));
    // Stride-2 blocks keep a 1x1 shortcut projection even at constant width.
    EXPECT_TRUE(names.count("stage2.block0.proj.weight"));
    EXPECT_TRUE(g.node("stage2.block0.proj").shortcut);
    EXPECT_TRUE(names.count("neck.fuse5.w0"));
    EXPECT_TRUE(names.count("head.1.cls.weight"));
    EXPECT_EQ(manifest.front().dims, (std::vector<std::int64_t>{16, 3, 5, 5}));
}

TEST(Manifest, RandomWeightsAreSeededAndComplete) {
    const ModelGraph g = build_model(ModelConfig::eresfd());
    const WeightStore a = make_random_weights(g, 1);
    EXPECT_EQ(a, make_random_weights(g, 1));
    EXPECT_FALSE(a == make_random_weights(g, 2));
    EXPECT_EQ(a.size(), weight_manifest(g).size());
    const LayerNode& n = g.node("stem.conv0");
    const ConvWeights cw = conv_weights_from_store(a, n);
    EXPECT_EQ(cw.kernel.shape(), n.conv().weight_shape());
}

TEST(Manifest, MisShapedWeightIsReported) {
    const ModelGraph g = make_conv_graph(ConvSpec::square(3, 1, 4, 4));
    WeightStore w;
    w.add("conv.weight", WeightTensor{{4, 4, 1, 1}, std::vector<float>(16)});
    EXPECT_ANY_THROW(conv_weights_from_store(w, g.node("conv")));
}

TEST(Image, WhitePixel) {
    const Tensor t = preprocess(RgbImage{1, 1, {255, 255, 255}});
    ASSERT_EQ(t.shape(), (Shape{1, 3, 1, 1}));
    EXPECT_EQ(t.data()[0], 151.0f);
    EXPECT_EQ(t.data()[1], 138.0f);
    EXPECT_EQ(t.data()[2], 132.0f);
}

TEST(Image, MeanPixelIsZero) {
    // RGB order on disk; means are listed B, G, R.
    const Tensor t = preprocess(RgbImage{1, 1, {123, 117, 104}});
    for (float v : t.data()) EXPECT_EQ(v, 0.0f);
}

TEST(Image, ChannelOrderIsBgr) {
    const Tensor t = preprocess(RgbImage{1, 1, {200, 0, 0}});
    EXPECT_EQ(t.data()[2], 200.0f - 123.0f);
    EXPECT_EQ(t.data()[0], -104.0f);
}

TEST(Image, PpmRoundTripAndLoad) {
    RgbImage img{2, 3, {}};
    for (int i = 0; i < 18; ++i) img.pixels.push_back(static_cast<std::uint8_t>(i * 13));
    EXPECT_EQ(decode_ppm(encode_ppm(img)).pixels, img.pixels);
    const auto path = temp_path("img.ppm");
    write_ppm(path, img);
    EXPECT_EQ(load_image(path), preprocess(img));
    std::filesystem::remove(path);
}

TEST(Image, PpmHeaderWithComment) {
    const std::string text = "P6\n# comment\n1 1\n255\n";
    std::vector<std::uint8_t> bytes(text.begin(), text.end());
    bytes.insert(bytes.end(), {1, 2, 3});
    const RgbImage img = decode_ppm(bytes);
    EXPECT_EQ(img.pixels, (std::vector<std::uint8_t>{1, 2, 3}));
}

TEST(Image, RawBlobBypassesPreprocessing) {
    std::mt19937 rng(2);
    const Tensor t = oracle::random_tensor({1, 3, 4, 5}, rng);
    const auto path = temp_path("img.blob");
    write_blob(path, t);
    EXPECT_EQ(load_image(path), t);
    std::filesystem::remove(path);
}

TEST(Image, UnknownFormatThrows) {
    const auto path = temp_path("img.txt");
    std::ofstream(path) << "hello world";
    EXPECT_THROW(load_image(path), std::runtime_error);
    std::filesystem::remove(path);
    EXPECT_ANY_THROW(decode_ppm(std::vector<std::uint8_t>{'P', '6', '\n', '2', ' ', '2', '\n', '2', '5', '5', '\n', 0}));
}

TEST(Image, ResizeFlipPad) {
    std::mt19937 rng(3);
    const Tensor x = oracle::random_tensor({1, 3, 6, 8}, rng);
    EXPECT_LE(oracle::max_rel_error(resize_bilinear(x, 6, 8), x), 1e-6);
    const Tensor c({1, 1, 5, 5}, 3.0f);
    const Tensor r = resize_bilinear(c, 9, 13);
    for (float v : r.data()) EXPECT_FLOAT_EQ(v, 3.0f);
    EXPECT_EQ(flip_horizontal(flip_horizontal(x)), x);
    EXPECT_EQ(flip_horizontal(x).at(0, 1, 2, 0), x.at(0, 1, 2, 7));
    const Tensor p = pad_to_min(x, 10, 4);
    ASSERT_EQ(p.shape(), (Shape{1, 3, 10, 8}));
    EXPECT_EQ(p.at(0, 0, 5, 7), x.at(0, 0, 5, 7));
    EXPECT_EQ(p.at(0, 0, 9, 7), 0.0f);
}

TEST(ConfigFile, DefaultsAndPresets) {
    const ModelFile f = parse_model_config("{}");
    EXPECT_EQ(f.input_shape(), (Shape{1, 3, 480, 640}));
    EXPECT_EQ(f.model.backbone.stage_blocks, (std::vector<int>{2, 3, 3, 3, 2, 1}));
    const ModelFile r = parse_model_config(R"({"preset": "resnet18", "backbone": {"width_multiplier": 0.25}})");
    EXPECT_EQ(r.model.backbone.stem, StemKind::kResNet);
    EXPECT_EQ(r.model.backbone.base_channels(), 16);
}

TEST(ConfigFile, SeparationPosition) {
    EXPECT_EQ(parse_model_config(R"({"neck": {"separation_position": "P3"}})").model.neck.separation_level, 3);
    EXPECT_EQ(parse_model_config(R"({"neck": {"separation_position": 4}})").model.neck.separation_level, 4);
    EXPECT_THROW(parse_model_config(R"({"neck": {"separation_position": "Q3"}})"), ConfigError);
    EXPECT_THROW(parse_model_config(R"({"neck": {"separation_position": "P9"}})"), ConfigError);
}

TEST(ConfigFile, RejectsBadInput) {
    EXPECT_THROW(parse_model_config(R"({"bogus": 1})"), ConfigError);
    EXPECT_THROW(parse_model_config(R"({"backbone": {"widht_multiplier": 1}})"), ConfigError);
    EXPECT_THROW(parse_model_config(R"({"ccpm": "yes"})"), ConfigError);
    EXPECT_THROW(parse_model_config("{"), ConfigError);
    EXPECT_THROW(parse_model_config(R"({"backbone": {"stem": "vgg"}})"), ConfigError);
    EXPECT_THROW(parse_model_config(R"({"input": {"height": 0}})"), ConfigError);
    EXPECT_ANY_THROW(load_model_config(temp_path("missing.json")));
}

TEST(ConfigFile, JsonRoundTrip) {
    const ModelFile f = parse_model_config(
        R"({"preset": "eresfd", "input": {"height": 320, "width": 256},
            "backbone": {"width_multiplier": 1.5}, "neck": {"kind": "fpn"}, "ccpm": false,
            "heads": {"maxout_background": 2}})");
    const ModelFile g = parse_model_config(to_json(f));
    EXPECT_EQ(to_json(g), to_json(f));
    EXPECT_EQ(g.input_height, 320);
    EXPECT_EQ(g.model.neck.kind, NeckKind::kFpn);
    EXPECT_FALSE(g.model.ccpm);
    EXPECT_EQ(g.model.heads.maxout_background, 2);
    EXPECT_EQ(g.model.backbone.base_channels(), 24);
}

TEST(ConfigFile, ShippedConfigsParse) {
    const std::filesystem::path dir = ERESFD_CONFIG_DIR;
    int count = 0;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        if (entry.path().extension() != ".json") continue;
        const ModelFile f = load_model_config(entry.path());
        EXPECT_NO_THROW(build_model(f.model)) << entry.path();
        ++count;
    }
    EXPECT_GE(count, 2);
}
