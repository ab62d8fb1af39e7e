#include "run_record.hpp"

#include <openssl/evp.h>

#include <fstream>
#include <iterator>
#include <memory>

#include <json.hpp>

#include "pivotcap/error.hpp"

namespace pivotcap::cli {

using nlohmann::json;

std::string git_blob_sha1_bytes(const std::string& bytes) {
  const std::string header = "blob " + std::to_string(bytes.size()) + std::string(1, '\0');
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha1(), nullptr) != 1 ||
      EVP_DigestUpdate(ctx.get(), header.data(), header.size()) != 1 ||
      EVP_DigestUpdate(ctx.get(), bytes.data(), bytes.size()) != 1 ||
      EVP_DigestFinal_ex(ctx.get(), digest, &len) != 1) {
    throw Error("sha1 digest failed");
  }
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[digest[i] >> 4];
    out += hex[digest[i] & 15];
  }
  return out;
}

std::string git_blob_sha1(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read " + path.string());
  return git_blob_sha1_bytes(std::string(std::istreambuf_iterator<char>(in), {}));
}

std::filesystem::path write_run_record(const RunRecord& r, const std::filesystem::path& path) {
  json inputs = json::array();
  for (const auto& p : r.inputs) inputs.push_back({{"path", p.generic_string()}, {"sha1", git_blob_sha1(p)}});
  json outputs = json::array();
  for (const auto& p : r.outputs) {
    json o = {{"path", p.generic_string()}};
    if (std::filesystem::is_regular_file(p)) o["sha1"] = git_blob_sha1(p);
    outputs.push_back(o);
  }
  json j = {{"schema", kRunRecordSchema},
            {"command", r.command},
            {"argv", r.argv},
            {"seed", r.config.seed},
            {"config_fingerprint", config_fingerprint(r.config)},
            {"config", render_config(r.config)},
            {"inputs", inputs},
            {"outputs", outputs}};
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << j.dump(2) << "\n";
  return path;
}

}  // namespace pivotcap::cli
