#include <fstream>
#include <iomanip>
#include <limits>

#include "binary_io.hpp"
#include "doprec/datagen.hpp"
#include "doprec/errors.hpp"

namespace doprec {

namespace {

constexpr char kMagic[] = "DPRC";
constexpr std::uint8_t kVersion = 1;

}  // namespace

void write_dataset(const Dataset& ds, std::ostream& out) {
    ds.validate();
    if (ds.n() > std::numeric_limits<std::uint32_t>::max()) throw IoError("n too large");
    bin::put_magic(out, kMagic);
    bin::put<std::uint8_t>(out, kVersion);
    bin::put<std::uint32_t>(out, static_cast<std::uint32_t>(ds.n()));
    bin::put<std::uint64_t>(out, ds.records.size());
    bin::put<std::uint8_t>(out, static_cast<std::uint8_t>(ds.tag));
    for (double x : ds.sigma_h) bin::put<double>(out, x);
    for (const auto& r : ds.records) {
        if (r.beta.alpha.size() > 255 || r.beta.alpha.size() != r.beta.lambda.size()) {
            throw IoError("doping spec term count not representable");
        }
        bin::put<std::uint64_t>(out, r.beta_seed);
        bin::put<std::uint64_t>(out, r.noise_seed);
        bin::put<std::uint8_t>(out, static_cast<std::uint8_t>(r.beta.alpha.size()));
        for (std::size_t i = 0; i < r.beta.alpha.size(); ++i) {
            bin::put<double>(out, r.beta.alpha[i]);
            bin::put<double>(out, r.beta.lambda[i]);
        }
        bin::put<double>(out, r.beta.C0);
        for (double v : r.u) bin::put<double>(out, v);
        for (double v : r.C) bin::put<double>(out, v);
    }
    if (!out) throw IoError("dataset write failed");
}

Dataset read_dataset(std::istream& in) {
    bin::expect_magic(in, kMagic, "DPRC");
    const auto version = bin::get<std::uint8_t>(in);
    if (version != kVersion) throw IoError("unsupported DPRC version " + std::to_string(version));
    const auto n = bin::get<std::uint32_t>(in);
    const auto count = bin::get<std::uint64_t>(in);
    const auto tag = bin::get<std::uint8_t>(in);
    if (tag > 1) throw IoError("unknown dataset tag " + std::to_string(tag));
    Dataset ds;
    ds.tag = static_cast<DatasetTag>(tag);
    ds.sigma_h.resize(n);
    for (auto& x : ds.sigma_h) x = bin::get<double>(in);
    for (std::uint64_t j = 0; j < count; ++j) {
        DatasetRecord r;
        r.beta_seed = bin::get<std::uint64_t>(in);
        r.noise_seed = bin::get<std::uint64_t>(in);
        const auto terms = bin::get<std::uint8_t>(in);
        for (int i = 0; i < terms; ++i) {
            r.beta.alpha.push_back(bin::get<double>(in));
            r.beta.lambda.push_back(bin::get<double>(in));
        }
        r.beta.C0 = bin::get<double>(in);
        r.u.resize(n);
        r.C.resize(n);
        for (auto& v : r.u) v = bin::get<double>(in);
        for (auto& v : r.C) v = bin::get<double>(in);
        ds.records.push_back(std::move(r));
    }
    if (in.peek() != std::char_traits<char>::eof()) throw IoError("trailing bytes after dataset");
    return ds;
}

void write_dataset(const Dataset& ds, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open " + path + " for writing");
    write_dataset(ds, out);
}

Dataset read_dataset(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    return read_dataset(in);
}

void export_csv(const Dataset& ds, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open " + path + " for writing");
    out << std::setprecision(17);
    out << "record,beta_seed,noise_seed,C0,terms";
    for (std::size_t i = 0; i < ds.n(); ++i) out << ",u_" << i;
    for (std::size_t i = 0; i < ds.n(); ++i) out << ",C_" << i;
    out << '\n';
    for (std::size_t j = 0; j < ds.records.size(); ++j) {
        const auto& r = ds.records[j];
        out << j << ',' << r.beta_seed << ',';
        if (r.noise_seed != kNoSeed) out << r.noise_seed;
        out << ',' << r.beta.C0 << ',';
        for (std::size_t i = 0; i < r.beta.alpha.size(); ++i) {
            out << (i ? ";" : "") << r.beta.alpha[i] << ':' << r.beta.lambda[i];
        }
        for (double v : r.u) out << ',' << v;
        for (double v : r.C) out << ',' << v;
        out << '\n';
    }
    if (!out) throw IoError("write failed for " + path);
}

}  // namespace doprec
