#include "plastiscan/cube_io.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace plastiscan {

namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& msg) { throw std::runtime_error(msg); }

std::string format_float(float v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.9g", static_cast<double>(v));
    return buf;
}

std::string read_line(std::istream& in, const std::filesystem::path& path) {
    std::string line;
    if (!std::getline(in, line)) fail("corrupt header in " + path.string());
    if (!line.empty() && line.back() == '\r') fail("corrupt header (CR line ending) in " + path.string());
    return line;
}

}  // namespace

void WavelengthGrid::validate() const {
    if (centers_nm.empty()) throw std::invalid_argument("wavelength grid is empty");
    for (std::size_t i = 0; i < centers_nm.size(); ++i) {
        float w = centers_nm[i];
        if (!std::isfinite(w) || w < 300.0f || w > 2500.0f)
            throw std::invalid_argument("wavelength out of [300, 2500] nm: " + format_float(w));
        if (i > 0 && centers_nm[i - 1] >= w)
            throw std::invalid_argument("wavelength grid not strictly increasing");
    }
}

void SpectralCube::validate() const {
    if (height <= 0 || width <= 0 || bands <= 0)
        throw std::invalid_argument("cube dimensions must be positive");
    if (data.size() != value_count())
        throw std::invalid_argument("cube data length does not match H*W*B");
    wavelengths.validate();
    if (wavelengths.size() != static_cast<std::size_t>(bands))
        throw std::invalid_argument("wavelength count does not equal band count");
    const bool reflectance = state == CalibrationState::Reflectance;
    for (float v : data) {
        if (!std::isfinite(v)) throw std::invalid_argument("cube contains a non-finite value");
        if (reflectance && (v < 0.0f || v > 1.0f))
            throw std::invalid_argument("reflectance value outside [0, 1]");
    }
    if (integration_time_ms && !(std::isfinite(*integration_time_ms) && *integration_time_ms > 0.0f))
        throw std::invalid_argument("integration time must be positive");
}

void RGBImage::validate() const {
    if (height <= 0 || width <= 0) throw std::invalid_argument("image dimensions must be positive");
    if (data.size() != static_cast<std::size_t>(height) * width * 3)
        throw std::invalid_argument("RGB data length does not match H*W*3");
    for (float v : data)
        if (!std::isfinite(v) || v < 0.0f || v > 1.0f)
            throw std::invalid_argument("RGB value outside [0, 1]");
}

LabelMask LabelMask::filled(int height, int width, std::uint8_t value) {
    LabelMask m;
    m.height = height;
    m.width = width;
    m.labels.assign(static_cast<std::size_t>(height) * width, value);
    return m;
}

void LabelMask::validate() const {
    if (height <= 0 || width <= 0) throw std::invalid_argument("mask dimensions must be positive");
    if (labels.size() != static_cast<std::size_t>(height) * width)
        throw std::invalid_argument("mask data length does not match H*W");
    for (std::uint8_t v : labels)
        if (v != kLabelNonPlastic && v != kLabelPlastic && v != kLabelIgnore)
            throw std::invalid_argument("mask contains a code other than {0, 1, 255}");
}

std::string role_name(Role role) { return role == Role::Train ? "train" : "test"; }

Role role_from_name(const std::string& name) {
    if (name == "train") return Role::Train;
    if (name == "test") return Role::Test;
    throw std::invalid_argument("unknown role: " + name);
}

void SceneManifest::validate() const {
    if (scenario_id < 1 || scenario_id > 10)
        throw std::invalid_argument("scenario_id must be in 1..10");
    const Role expected = scenario_id <= 6 ? Role::Train : Role::Test;
    if (role != expected)
        throw std::invalid_argument("scenario " + std::to_string(scenario_id) + " must have role " +
                                    role_name(expected));
    if (cube.empty() || rgb.empty() || mask.empty())
        throw std::invalid_argument("manifest needs cube, rgb and mask paths");
}

SpectralCube load_cube(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail("cannot open cube file: " + path.string());

    std::string magic = read_line(in, path);
    if (magic != "RCUBE 1") fail("bad magic/version in " + path.string());

    SpectralCube cube;
    {
        std::istringstream dims(read_line(in, path));
        if (!(dims >> cube.height >> cube.width >> cube.bands) || cube.height <= 0 ||
            cube.width <= 0 || cube.bands <= 0)
            fail("bad dimension line in " + path.string());
    }
    {
        std::istringstream ws(read_line(in, path));
        float w;
        while (ws >> w) cube.wavelengths.centers_nm.push_back(w);
        if (cube.wavelengths.size() != static_cast<std::size_t>(cube.bands))
            fail("wavelength count mismatch in " + path.string());
    }
    {
        std::string line = read_line(in, path);
        if (line == "STATE raw")
            cube.state = CalibrationState::RawCounts;
        else if (line == "STATE reflectance")
            cube.state = CalibrationState::Reflectance;
        else
            fail("bad STATE line in " + path.string());
    }
    {
        std::string line = read_line(in, path);
        if (line.rfind("INTEGRATION_MS ", 0) != 0) fail("bad INTEGRATION_MS line in " + path.string());
        std::string value = line.substr(15);
        if (value != "-") {
            try {
                cube.integration_time_ms = std::stof(value);
            } catch (const std::exception&) {
                fail("bad INTEGRATION_MS value in " + path.string());
            }
        }
    }

    const std::streamoff data_start = in.tellg();
    in.seekg(0, std::ios::end);
    const std::streamoff file_size = in.tellg();
    const std::uint64_t expected =
        static_cast<std::uint64_t>(cube.height) * cube.width * cube.bands * sizeof(float);
    if (static_cast<std::uint64_t>(file_size - data_start) != expected)
        fail("payload length mismatch in " + path.string());

    in.seekg(data_start);
    cube.data.resize(cube.value_count());
    in.read(reinterpret_cast<char*>(cube.data.data()), static_cast<std::streamsize>(expected));
    if (!in) fail("short read in " + path.string());

    try {
        cube.validate();
    } catch (const std::exception& e) {
        fail("invalid cube in " + path.string() + ": " + e.what());
    }
    return cube;
}

void save_cube(const SpectralCube& cube, const std::filesystem::path& path) {
    cube.validate();
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) fail("cannot open for write: " + path.string());

    std::string header = "RCUBE 1\n";
    header += std::to_string(cube.height) + " " + std::to_string(cube.width) + " " +
              std::to_string(cube.bands) + "\n";
    for (std::size_t i = 0; i < cube.wavelengths.size(); ++i) {
        if (i) header += ' ';
        header += format_float(cube.wavelengths.centers_nm[i]);
    }
    header += "\nSTATE ";
    header += cube.state == CalibrationState::RawCounts ? "raw" : "reflectance";
    header += "\nINTEGRATION_MS ";
    header += cube.integration_time_ms ? format_float(*cube.integration_time_ms) : "-";
    header += '\n';

    out.write(header.data(), static_cast<std::streamsize>(header.size()));
    out.write(reinterpret_cast<const char*>(cube.data.data()),
              static_cast<std::streamsize>(cube.data.size() * sizeof(float)));
    if (!out) fail("write failure: " + path.string());
}

LabelMask load_mask(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail("cannot open mask file: " + path.string());

    auto next_token = [&]() -> std::string {
        std::string tok;
        int ch;
        while ((ch = in.get()) != EOF) {
            if (ch == '#') {
                while ((ch = in.get()) != EOF && ch != '\n') {
                }
                continue;
            }
            if (std::isspace(ch)) {
                if (!tok.empty()) return tok;
                continue;
            }
            tok.push_back(static_cast<char>(ch));
        }
        if (tok.empty()) fail("truncated PGM header in " + path.string());
        return tok;
    };

    if (next_token() != "P5") fail("not a binary PGM (P5): " + path.string());
    LabelMask mask;
    try {
        mask.width = std::stoi(next_token());
        mask.height = std::stoi(next_token());
        if (std::stoi(next_token()) != 255) fail("PGM maxval must be 255: " + path.string());
    } catch (const std::runtime_error&) {
        throw;
    } catch (const std::exception&) {
        fail("bad PGM header in " + path.string());
    }
    if (mask.width <= 0 || mask.height <= 0) fail("bad PGM dimensions in " + path.string());

    mask.labels.resize(static_cast<std::size_t>(mask.width) * mask.height);
    in.read(reinterpret_cast<char*>(mask.labels.data()),
            static_cast<std::streamsize>(mask.labels.size()));
    if (!in) fail("short PGM payload in " + path.string());

    try {
        mask.validate();
    } catch (const std::exception& e) {
        fail("invalid mask in " + path.string() + ": " + e.what());
    }
    return mask;
}

void save_mask(const LabelMask& mask, const std::filesystem::path& path) {
    mask.validate();
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) fail("cannot open for write: " + path.string());
    std::string header =
        "P5\n" + std::to_string(mask.width) + " " + std::to_string(mask.height) + "\n255\n";
    out.write(header.data(), static_cast<std::streamsize>(header.size()));
    out.write(reinterpret_cast<const char*>(mask.labels.data()),
              static_cast<std::streamsize>(mask.labels.size()));
    if (!out) fail("write failure: " + path.string());
}

SceneManifest load_manifest(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) fail("cannot open manifest: " + path.string());
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::exception& e) {
        fail("bad manifest JSON in " + path.string() + ": " + e.what());
    }
    SceneManifest m;
    try {
        m.scenario_id = doc.at("scenario_id").get<int>();
        m.composition = doc.at("composition").get<std::vector<std::string>>();
        m.background = doc.at("background").get<std::string>();
        m.role = role_from_name(doc.at("role").get<std::string>());
        m.cube = doc.at("cube").get<std::string>();
        m.rgb = doc.at("rgb").get<std::string>();
        m.mask = doc.at("mask").get<std::string>();
        if (doc.contains("dark")) m.dark = doc["dark"].get<std::string>();
        if (doc.contains("reference")) m.reference = doc["reference"].get<std::string>();
    } catch (const json::exception& e) {
        fail("bad manifest schema in " + path.string() + ": " + e.what());
    }
    try {
        m.validate();
    } catch (const std::exception& e) {
        fail("invalid manifest " + path.string() + ": " + e.what());
    }
    return m;
}

void save_manifest(const SceneManifest& manifest, const std::filesystem::path& path) {
    manifest.validate();
    json doc;
    doc["scenario_id"] = manifest.scenario_id;
    doc["composition"] = manifest.composition;
    doc["background"] = manifest.background;
    doc["role"] = role_name(manifest.role);
    doc["cube"] = manifest.cube;
    doc["rgb"] = manifest.rgb;
    doc["mask"] = manifest.mask;
    if (!manifest.dark.empty()) doc["dark"] = manifest.dark;
    if (!manifest.reference.empty()) doc["reference"] = manifest.reference;
    std::ofstream out(path, std::ios::trunc);
    if (!out) fail("cannot open for write: " + path.string());
    out << doc.dump(2) << '\n';
    if (!out) fail("write failure: " + path.string());
}

std::filesystem::path resolve_manifest_path(const std::filesystem::path& manifest_file,
                                            const std::string& entry) {
    std::filesystem::path p(entry);
    if (p.is_absolute()) return p;
    return manifest_file.parent_path() / p;
}

PixelSamples flatten_pixels(const SpectralCube& cube, const LabelMask& mask) {
    if (mask.height != cube.height || mask.width != cube.width)
        throw std::invalid_argument("mask dimensions do not match cube");

    PixelSamples out;
    out.bands = static_cast<std::size_t>(cube.bands);
    std::size_t kept = 0;
    for (std::uint8_t v : mask.labels)
        if (v != kLabelIgnore) ++kept;
    out.count = kept;
    out.features.resize(kept * out.bands);
    out.labels.resize(kept);

    const std::size_t plane = cube.pixel_count();
    std::size_t row = 0;
    for (std::size_t p = 0; p < plane; ++p) {
        const std::uint8_t label = mask.labels[p];
        if (label == kLabelIgnore) continue;
        float* dst = out.features.data() + row * out.bands;
        for (std::size_t b = 0; b < out.bands; ++b) dst[b] = cube.data[b * plane + p];
        out.labels[row] = label;
        ++row;
    }
    return out;
}

SpectralCube cube_from_rgb(const RGBImage& image) {
    image.validate();
    SpectralCube cube;
    cube.height = image.height;
    cube.width = image.width;
    cube.bands = 3;
    cube.wavelengths.centers_nm = {470.0f, 540.0f, 620.0f};
    cube.state = CalibrationState::Reflectance;
    cube.data.resize(cube.value_count());
    const std::size_t plane = cube.pixel_count();
    // band 0 (470 nm) <- blue channel, band 1 <- green, band 2 (620 nm) <- red
    for (std::size_t p = 0; p < plane; ++p) {
        cube.data[0 * plane + p] = image.data[p * 3 + 2];
        cube.data[1 * plane + p] = image.data[p * 3 + 1];
        cube.data[2 * plane + p] = image.data[p * 3 + 0];
    }
    return cube;
}

RGBImage rgb_from_cube(const SpectralCube& cube) {
    if (cube.bands != 3) throw std::invalid_argument("RGB cube must have exactly 3 bands");
    if (cube.state != CalibrationState::Reflectance)
        throw std::invalid_argument("RGB cube must hold reflectance values");
    RGBImage image;
    image.height = cube.height;
    image.width = cube.width;
    image.data.resize(static_cast<std::size_t>(cube.height) * cube.width * 3);
    const std::size_t plane = cube.pixel_count();
    for (std::size_t p = 0; p < plane; ++p) {
        image.data[p * 3 + 0] = cube.data[2 * plane + p];
        image.data[p * 3 + 1] = cube.data[1 * plane + p];
        image.data[p * 3 + 2] = cube.data[0 * plane + p];
    }
    return image;
}

}  // namespace plastiscan
