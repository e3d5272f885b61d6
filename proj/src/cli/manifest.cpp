#include <array>
#include <fstream>
#include <memory>

#include <openssl/evp.h>

#include "edapipe/cli.hpp"
#include "edapipe/csv.hpp"
#include "edapipe/error.hpp"

namespace edapipe::cli {

std::string sha256_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw NotFoundError("cannot read " + path.string());
    std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
    if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1) throw Error("sha256 init failed");
    std::array<char, 1 << 16> buf;
    while (in) {
        in.read(buf.data(), buf.size());
        if (in.gcount() > 0) EVP_DigestUpdate(ctx.get(), buf.data(), static_cast<std::size_t>(in.gcount()));
    }
    std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
    unsigned int len = 0;
    EVP_DigestFinal_ex(ctx.get(), md.data(), &len);
    static constexpr char hex[] = "0123456789abcdef";
    std::string out;
    for (unsigned int i = 0; i < len; ++i) {
        out += hex[md[i] >> 4];
        out += hex[md[i] & 15];
    }
    return out;
}

namespace {

nlohmann::ordered_json file_entries(const std::vector<std::string>& paths) {
    auto arr = nlohmann::ordered_json::array();
    for (const auto& p : paths) {
        nlohmann::ordered_json e;
        e["path"] = p;
        std::error_code ec;
        if (std::filesystem::is_regular_file(p, ec)) {
            e["sha256"] = sha256_file(p);
            e["bytes"] = std::filesystem::file_size(p);
        } else if (std::filesystem::is_directory(p, ec)) {
            e["kind"] = "directory";
        }
        arr.push_back(std::move(e));
    }
    return arr;
}

}  // namespace

nlohmann::ordered_json RunManifest::to_json() const {
    nlohmann::ordered_json j;
    j["tool"] = "edapipe";
    j["version"] = kVersion;
    j["command"] = command;
    j["argv"] = argv;
    j["config"] = config;
    j["seeds"] = seeds;
    j["inputs"] = file_entries(inputs);
    j["outputs"] = file_entries(outputs);
    return j;
}

void RunManifest::write(const std::filesystem::path& path) const {
    write_text_file(path.string(), to_json().dump(2) + "\n");
}

}  // namespace edapipe::cli
