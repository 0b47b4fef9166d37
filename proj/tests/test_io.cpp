#include <doctest.h>

#include <filesystem>

#include "helpers.hpp"
#include "vqr/checkpoint.hpp"
#include "vqr/config.hpp"
#include "vqr/dataset.hpp"
#include "vqr/error.hpp"
#include "vqr/image_io.hpp"
#include "vqr/probe.hpp"

using namespace vqr;

TEST_CASE("epsilon notation") {
  CHECK(parse_epsilon("8/255") == 8.0 / 255.0);
  CHECK(parse_epsilon(" 0.5 ") == 0.5);
  CHECK(parse_epsilon("0") == 0.0);
  CHECK(parse_epsilon_list("0, 2/255,4/255") == std::vector<double>{0.0, 2.0 / 255.0, 4.0 / 255.0});
  CHECK_THROWS_AS(parse_epsilon("8/0"), FormatError);
  CHECK_THROWS_AS(parse_epsilon("-1/255"), FormatError);
  CHECK_THROWS_AS(parse_epsilon("eight"), FormatError);
  for (double v : {0.1, 8.0 / 255.0, 1e-300, 123456.789}) CHECK(std::stod(format_real(v)) == v);
}

TEST_CASE("config parse, override and round trip") {
  const auto cfg = RunConfig::parse("# comment\nbudget.epsilon = 8/255\n\napgd.n_iters=50  # inline\n");
  CHECK(cfg.epsilon("budget.epsilon") == 8.0 / 255.0);
  CHECK(cfg.count("apgd.n_iters") == 50);
  CHECK(cfg.flag("apgd.random_start"));
  CHECK(RunConfig::parse(cfg.serialize()) == cfg);
  CHECK(RunConfig::parse(cfg.serialize()).hash() == cfg.hash());

  RunConfig other = cfg;
  other.apply("budget.epsilon=0.03137254901960784");
  CHECK(other.epsilon("budget.epsilon") == cfg.epsilon("budget.epsilon"));
  CHECK(other.hash() != cfg.hash());

  CHECK_THROWS_WITH_AS(RunConfig::parse("run.seed = 1\nnope.key = 3\n", "c.cfg"),
                       doctest::Contains("c.cfg:2"), FormatError);
  CHECK_THROWS_AS(RunConfig::parse("apgd.n_iters = ten\n"), FormatError);
  CHECK_THROWS_AS(RunConfig::parse("apgd.random_start = maybe\n"), FormatError);
  CHECK_THROWS_AS(RunConfig::parse("just words\n"), FormatError);
  CHECK_THROWS_AS(RunConfig::parse("eval.epsilons = 1/255,x\n"), FormatError);
}

TEST_CASE("CIFAR-10 binary records") {
  std::vector<std::uint8_t> bytes(3 * 3073);
  for (std::size_t r = 0; r < 3; ++r) {
    bytes[r * 3073] = static_cast<std::uint8_t>(7 + r);
    for (std::size_t j = 1; j < 3073; ++j) bytes[r * 3073 + j] = static_cast<std::uint8_t>((j + r) % 256);
  }
  bytes[1] = 255;
  const auto d = parse_cifar10(bytes, Split::Train);
  CHECK(d.size() == 3);
  CHECK(d.labels == std::vector<std::int32_t>{7, 8, 9});
  CHECK(d.pixels[0] == 1.0f);
  CHECK(d.pixels[1] == 2.0f / 255.0f);
  CHECK(d.pixels[1024] == float((1025) % 256) / 255.0f);  // first green byte

  auto short_file = bytes;
  short_file.pop_back();
  CHECK_THROWS_AS(parse_cifar10(short_file, Split::Train), FormatError);
  auto bad_label = bytes;
  bad_label[3073] = 10;
  CHECK_THROWS_WITH_AS(parse_cifar10(bad_label, Split::Train), doctest::Contains("3073"), FormatError);
}

TEST_CASE("synthetic shapes") {
  const auto a = gen_shapes(5, 100, 32, 4), b = gen_shapes(5, 100, 32, 4);
  CHECK(a.pixels == b.pixels);
  CHECK(a.labels == b.labels);
  CHECK(a.pixels != gen_shapes(6, 100, 32, 4).pixels);
  CHECK(a.pixels != gen_shapes(5, 100, 32, 4, Split::Test).pixels);
  std::vector<int> count(4, 0);
  for (auto l : a.labels) ++count[l];
  for (int c : count) CHECK(std::abs(c - 25) <= 1);
  for (float v : a.pixels) CHECK((v >= 0.0f && v <= 1.0f));
  CHECK_THROWS_AS(gen_shapes(0, 10, 32, 9), FormatError);
  CHECK_THROWS_AS(gen_shapes(0, 10, 32, 1), FormatError);
}

TEST_CASE("probe container round trip and corruption") {
  for (ProbeArch arch : {ProbeArch::Linear, ProbeArch::Mlp}) {
    const auto p = init_probe(arch, 24, 7, 3, 4);
    const auto bytes = serialize_probe(p);
    const auto q = parse_probe(bytes);
    CHECK(hash_probe(q) == hash_probe(p));
    CHECK(serialize_probe(q) == bytes);
    auto bad = bytes;
    bad[1] = 'Z';
    CHECK_THROWS_AS(parse_probe(bad), FormatError);
    bad = bytes;
    bad.resize(bytes.size() - 1);
    CHECK_THROWS_AS(parse_probe(bad), FormatError);
  }
  CHECK_THROWS_AS(parse_probe_arch("cnn"), FormatError);
}

TEST_CASE("probe training on separable features") {
  std::vector<float> feats;
  std::vector<std::int32_t> labels;
  Rng rng = Rng::stream(1, "data");
  for (int i = 0; i < 64; ++i) {
    const int y = i % 2;
    feats.push_back(static_cast<float>((y ? 1.0 : -1.0) + 0.1 * rng.normal()));
    feats.push_back(static_cast<float>(rng.normal()));
    labels.push_back(y);
  }
  ProbeTrainOptions o;
  o.epochs = 200;
  o.lr = 0.05;
  ProbeTrainLog log;
  train_probe_on_features(feats, 2, labels, 2, o, &log);
  CHECK(log.train_accuracy == 1.0);
}

TEST_CASE("PPM encode and grid layout") {
  RgbImage img{2, 1, {0, 10, 20, 30, 40, 50}};
  const auto bytes = encode_ppm(img);
  const std::string header(bytes.begin(), bytes.begin() + 11);
  CHECK(header == "P6\n2 1\n255\n");
  const auto back = decode_ppm(bytes);
  CHECK(back.rgb == img.rgb);
  CHECK(back.width == 2);
  CHECK_THROWS_AS(decode_ppm(std::vector<std::uint8_t>(bytes.begin(), bytes.end() - 1)), FormatError);

  CHECK(to_byte(-0.5f) == 0);
  CHECK(to_byte(1.0f) == 255);
  CHECK(to_byte(0.5f) == 128);

  const std::vector<float> gray(4, 1.0f), black(4, 0.0f);
  const auto grid = make_grid({{gray, black}, {black, gray}}, 1, 2);
  CHECK(grid.width == 2 * 2 + 2);
  CHECK(grid.height == 2 * 2 + 2);
  auto px = [&](std::size_t x, std::size_t y) { return grid.rgb[(y * grid.width + x) * 3]; };
  CHECK(px(0, 0) == 255);  // first cell, white
  CHECK(px(2, 0) == 255);  // separator
  CHECK(px(4, 0) == 0);    // second cell, black
  CHECK(px(0, 4) == 0);
  CHECK(px(5, 5) == 255);
}

TEST_CASE("file helpers") {
  const auto dir = std::filesystem::temp_directory_path() / "vqr_io_test";
  std::filesystem::create_directories(dir);
  const std::string path = (dir / "x.bin").string();
  write_file(path, std::string_view("abc"));
  CHECK(read_file(path) == std::vector<std::uint8_t>{'a', 'b', 'c'});
  CHECK(file_hash(path) == hex64(fnv1a("abc")));
  CHECK(hex64(fnv1a("")) == "cbf29ce484222325");
  CHECK_THROWS_AS(read_file((dir / "missing").string()), FormatError);
}

TEST_CASE("rng streams are independent and splittable") {
  Rng a = Rng::stream(1, "init"), b = Rng::stream(1, "init");
  CHECK(a.next_u64() == b.next_u64());
  CHECK(Rng::stream(1, "init").next_u64() != Rng::stream(1, "data").next_u64());
  CHECK(Rng::stream(1, "init").split(0).next_u64() != Rng::stream(1, "init").split(1).next_u64());
  Rng parent = Rng::stream(2, "attack");
  const auto child_first = parent.split(3).next_u64();
  parent.next_u64();
  CHECK(parent.split(3).next_u64() == child_first);
  double s = 0;
  Rng u = Rng::stream(3, "data");
  for (int i = 0; i < 10000; ++i) s += u.uniform();
  CHECK(s / 10000 == doctest::Approx(0.5).epsilon(0.02));
}
