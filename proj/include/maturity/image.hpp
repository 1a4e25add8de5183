#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <openssl/evp.h>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "maturity/errors.hpp"

namespace maturity {

constexpr int kDefaultMaxImageSide = 1024;

// A screenshot prepared for a model request. The digest is computed over the
// original file bytes so cache keys survive re-encoding changes.
struct EncodedImage {
    std::string media_type;   // "image/png" or "image/jpeg"
    std::string bytes_digest; // sha256 hex of the original file
    std::string payload;      // base64 of the (possibly downscaled) image
    int width = 0;
    int height = 0;
};

namespace detail {

inline std::string sha256_hex(const void* data, size_t size) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int digest_len = 0;
    if (EVP_Digest(data, size, digest, &digest_len, EVP_sha256(), nullptr) != 1)
        throw Error("sha256 digest failed");
    static const char* hex = "0123456789abcdef";
    std::string out;
    out.reserve(digest_len * 2);
    for (unsigned int i = 0; i < digest_len; ++i) {
        out += hex[digest[i] >> 4];
        out += hex[digest[i] & 0x0f];
    }
    return out;
}

inline std::string sha256_hex(const std::string& data) {
    return sha256_hex(data.data(), data.size());
}

inline std::string base64_encode(const unsigned char* data, size_t size) {
    static const char* alphabet =
        "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
    std::string out;
    out.reserve(((size + 2) / 3) * 4);
    size_t i = 0;
    for (; i + 2 < size; i += 3) {
        const uint32_t n = (static_cast<uint32_t>(data[i]) << 16) |
                           (static_cast<uint32_t>(data[i + 1]) << 8) |
                           static_cast<uint32_t>(data[i + 2]);
        out += alphabet[(n >> 18) & 63];
        out += alphabet[(n >> 12) & 63];
        out += alphabet[(n >> 6) & 63];
        out += alphabet[n & 63];
    }
    if (i + 1 == size) {
        const uint32_t n = static_cast<uint32_t>(data[i]) << 16;
        out += alphabet[(n >> 18) & 63];
        out += alphabet[(n >> 12) & 63];
        out += "==";
    } else if (i + 2 == size) {
        const uint32_t n = (static_cast<uint32_t>(data[i]) << 16) |
                           (static_cast<uint32_t>(data[i + 1]) << 8);
        out += alphabet[(n >> 18) & 63];
        out += alphabet[(n >> 12) & 63];
        out += alphabet[(n >> 6) & 63];
        out += '=';
    }
    return out;
}

inline std::string base64_encode(const std::vector<unsigned char>& data) {
    return base64_encode(data.data(), data.size());
}

inline std::vector<unsigned char> read_file_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FileNotFoundError("file not found: " + path.string());
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                     std::istreambuf_iterator<char>());
    return bytes;
}

inline bool looks_like_png(const std::vector<unsigned char>& bytes) {
    static const unsigned char sig[] = {0x89, 'P', 'N', 'G'};
    return bytes.size() >= 4 && std::equal(sig, sig + 4, bytes.begin());
}

inline bool looks_like_jpeg(const std::vector<unsigned char>& bytes) {
    return bytes.size() >= 2 && bytes[0] == 0xff && bytes[1] == 0xd8;
}

}  // namespace detail

// Loads a PNG or JPEG, downscales proportionally so the longest side fits
// max_side (never upscales), and base64-encodes the result. When no resize is
// needed the original bytes pass through untouched.
inline EncodedImage encode_image(const std::filesystem::path& path,
                                 int max_side = kDefaultMaxImageSide) {
    const auto bytes = detail::read_file_bytes(path);
    if (bytes.empty())
        throw UndecodableImageError("undecodable image (empty file): " + path.string());

    const bool is_png = detail::looks_like_png(bytes);
    const bool is_jpeg = detail::looks_like_jpeg(bytes);
    if (!is_png && !is_jpeg)
        throw UndecodableImageError("undecodable image (not PNG or JPEG): " + path.string());

    cv::Mat decoded = cv::imdecode(bytes, cv::IMREAD_COLOR);
    if (decoded.empty())
        throw UndecodableImageError("undecodable image: " + path.string());

    EncodedImage image;
    image.media_type = is_png ? "image/png" : "image/jpeg";
    image.bytes_digest = detail::sha256_hex(bytes.data(), bytes.size());

    const int longest = std::max(decoded.cols, decoded.rows);
    if (max_side > 0 && longest > max_side) {
        const double scale = static_cast<double>(max_side) / longest;
        cv::Mat resized;
        cv::resize(decoded, resized,
                   cv::Size(std::max(1, static_cast<int>(std::lround(decoded.cols * scale))),
                            std::max(1, static_cast<int>(std::lround(decoded.rows * scale)))),
                   0, 0, cv::INTER_AREA);
        std::vector<unsigned char> reencoded;
        cv::imencode(is_png ? ".png" : ".jpg", resized, reencoded);
        image.payload = detail::base64_encode(reencoded);
        image.width = resized.cols;
        image.height = resized.rows;
    } else {
        image.payload = detail::base64_encode(bytes);
        image.width = decoded.cols;
        image.height = decoded.rows;
    }
    return image;
}

}  // namespace maturity
