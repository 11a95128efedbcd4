#include "hpm/manifest.hpp"

#include <openssl/evp.h>

#include <array>
#include <fstream>
#include <memory>
#include <stdexcept>

namespace hpm::manifest {

namespace {

class Sha256 {
public:
    Sha256() : ctx_(EVP_MD_CTX_new(), &EVP_MD_CTX_free)
    {
        if (!ctx_ || EVP_DigestInit_ex(ctx_.get(), EVP_sha256(), nullptr) != 1)
            throw std::runtime_error("sha256 init failed");
    }
    void update(const void* data, std::size_t n)
    {
        if (EVP_DigestUpdate(ctx_.get(), data, n) != 1) throw std::runtime_error("sha256 update failed");
    }
    std::string hex()
    {
        std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
        unsigned int len = 0;
        if (EVP_DigestFinal_ex(ctx_.get(), md.data(), &len) != 1) throw std::runtime_error("sha256 final failed");
        static constexpr char digits[] = "0123456789abcdef";
        std::string out;
        for (unsigned int i = 0; i < len; ++i) {
            out += digits[md[i] >> 4];
            out += digits[md[i] & 0xf];
        }
        return out;
    }

private:
    std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx_;
};

}  // namespace

std::string sha256_hex(std::string_view bytes)
{
    Sha256 h;
    h.update(bytes.data(), bytes.size());
    return h.hex();
}

std::string sha256_file(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read " + path.string());
    Sha256 h;
    std::array<char, 1 << 16> buf{};
    while (in) {
        in.read(buf.data(), buf.size());
        h.update(buf.data(), static_cast<std::size_t>(in.gcount()));
    }
    return h.hex();
}

void RunManifest::add_input(const std::filesystem::path& p) { inputs.push_back({p.generic_string(), sha256_file(p)}); }

void RunManifest::add_output(const std::filesystem::path& out_dir, const std::filesystem::path& p)
{
    outputs.push_back({std::filesystem::relative(p, out_dir).generic_string(), sha256_file(p)});
}

nlohmann::json RunManifest::to_json() const
{
    auto digests = [](const std::vector<FileDigest>& v) {
        nlohmann::json arr = nlohmann::json::array();
        for (const auto& d : v) arr.push_back({{"path", d.path}, {"sha256", d.sha256}});
        return arr;
    };
    return {{"command", command},           {"argv", argv},
            {"tool_version", kToolVersion}, {"inputs", digests(inputs)},
            {"config", config},             {"outputs", digests(outputs)}};
}

void RunManifest::write(const std::filesystem::path& path) const
{
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << to_json().dump(2) << '\n';
}

}  // namespace hpm::manifest
