#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "t2ue/core/rng.hpp"
#include "t2ue/data/dataset.hpp"
#include "t2ue/data/png_io.hpp"

using namespace t2ue;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& tag) {
    fs::path p = fs::temp_directory_path() / ("t2ue_test_" + tag);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
}

DatasetSpec tiny_spec() {
    DatasetSpec s;
    s.samples_per_class_train = 3;
    s.samples_per_class_test = 2;
    s.seed = 42;
    return s;
}

}  // namespace

TEST_CASE("png round trip is exact") {
    auto dir = temp_dir("png");
    Rng rng(1);
    ImageU8 img;
    img.width = 17;
    img.height = 9;
    img.rgb.resize(17 * 9 * 3);
    for (auto& b : img.rgb) b = static_cast<uint8_t>(rng.next_u64() & 0xff);
    auto path = (dir / "x.png").string();
    write_png_rgb8(path, img);
    ImageU8 back = read_png_rgb8(path);
    CHECK(back.width == img.width);
    CHECK(back.height == img.height);
    CHECK(back.rgb == img.rgb);
}

TEST_CASE("png byte-to-float conversion endpoints") {
    ImageU8 img;
    img.width = 2;
    img.height = 1;
    img.rgb = {255, 0, 8, 128, 3, 200};
    Tensor<float> f = image_to_float(img);
    CHECK(f.data[0] == 1.0f);              // byte 255 -> exactly 1.0
    CHECK(f.data[2 * 2 + 0] == doctest::Approx(8.0 / 255.0).epsilon(1e-7));
    ImageU8 back = float_to_image(f);
    CHECK(back.rgb == img.rgb);
}

TEST_CASE("png rejects corrupt input") {
    auto dir = temp_dir("pngbad");
    auto path = (dir / "bad.png").string();
    std::ofstream os(path, std::ios::binary);
    os << "this is not a png";
    os.close();
    CHECK_THROWS_AS((void)read_png_rgb8(path), std::runtime_error);
}

TEST_CASE("caption_for substitution and purity") {
    DatasetSpec s;
    // class (red, circle) is color 0, shape 0 -> class_id 0
    CHECK(caption_for(0, 0, s) == "a photo of a red circle");
    CHECK(caption_for(0, 0, s) == caption_for(0, 0, s));
    CHECK(caption_for(0, 3, s) == "the circle is red");
    CHECK_THROWS_AS((void)caption_for(0, 99, s), std::out_of_range);
    CHECK_THROWS_AS((void)caption_for(-1, 0, s), std::out_of_range);
    CHECK_THROWS_AS((void)caption_for(16, 0, s), std::out_of_range);
}

TEST_CASE("dataset spec validation names the failing field") {
    DatasetSpec s = tiny_spec();
    s.shapes = {"circle"};
    try {
        (void)generate_dataset(s, "train", temp_dir("badspec").string());
        FAIL("expected validation error");
    } catch (const std::invalid_argument& e) {
        CHECK(std::string(e.what()).find("shapes") != std::string::npos);
    }
}

TEST_CASE("generate + load round trip with correct counts") {
    auto dir = temp_dir("gen");
    DatasetSpec s = tiny_spec();
    DatasetManifest m = generate_dataset(s, "train", dir.string());
    CHECK(m.entries.size() == 16u * 3u);
    auto samples = load_dataset((dir / "manifest.json").string());
    CHECK(samples.size() == m.entries.size());
    for (const auto& smp : samples) {
        CHECK(smp.image.dim(1) == s.image_size);
        for (int64_t i = 0; i < smp.image.size(); ++i) {
            CHECK(smp.image.data[i] >= 0.0f);
            CHECK(smp.image.data[i] <= 1.0f);
        }
        // caption words recover the class
        CHECK(parse_caption_class(smp.caption, s) == smp.class_id);
        CHECK(smp.caption == caption_for(smp.class_id, smp.template_id, s));
    }
}

TEST_CASE("generation is byte-identical across runs") {
    DatasetSpec s = tiny_spec();
    auto d1 = temp_dir("det1");
    auto d2 = temp_dir("det2");
    generate_dataset(s, "train", d1.string());
    generate_dataset(s, "train", d2.string());
    CHECK(slurp(d1 / "manifest.json") == slurp(d2 / "manifest.json"));
    int checked = 0;
    for (const auto& e : fs::directory_iterator(d1)) {
        if (e.path().extension() != ".png") continue;
        CHECK(slurp(e.path()) == slurp(d2 / e.path().filename()));
        ++checked;
    }
    CHECK(checked == 48);
}

TEST_CASE("train and test splits use disjoint random streams") {
    DatasetSpec s = tiny_spec();
    auto d1 = temp_dir("split_tr");
    auto d2 = temp_dir("split_te");
    s.samples_per_class_test = s.samples_per_class_train;  // same count, same indices
    generate_dataset(s, "train", d1.string());
    generate_dataset(s, "test", d2.string());
    // same (class, index) slots must not reproduce the same pixels
    int identical = 0, total = 0;
    for (const auto& e : fs::directory_iterator(d1)) {
        if (e.path().extension() != ".png") continue;
        std::string test_name = e.path().filename().string();
        test_name.replace(0, 5, "test");  // train_... -> test_...
        if (slurp(e.path()) == slurp(d2 / test_name)) ++identical;
        ++total;
    }
    CHECK(total == 48);
    CHECK(identical == 0);
}

TEST_CASE("missing file error names the entry id") {
    auto dir = temp_dir("missing");
    DatasetSpec s = tiny_spec();
    DatasetManifest m = generate_dataset(s, "test", dir.string());
    fs::remove(dir / m.entries[5].file);
    try {
        (void)load_dataset((dir / "manifest.json").string());
        FAIL("expected error");
    } catch (const std::runtime_error& e) {
        CHECK(std::string(e.what()).find(m.entries[5].id) != std::string::npos);
    }
}

TEST_CASE("dataset batch assembly") {
    auto dir = temp_dir("batch");
    DatasetSpec s = tiny_spec();
    generate_dataset(s, "test", dir.string());
    Dataset d = Dataset::from_manifest((dir / "manifest.json").string());
    Tensor<float> b = d.image_batch({0, 5, 7});
    CHECK(b.shape == std::vector<int>{3, 3, s.image_size, s.image_size});
    CHECK(d.label_batch({0, 5, 7}).size() == 3);
    CHECK(d.caption_batch({1})[0] == d.samples[1].caption);
}
