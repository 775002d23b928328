#include "mirenc/storage.hpp"

#include "mirenc/error.hpp"

#include <boost/tokenizer.hpp>
#include "json.hpp"

#include <bit>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <unistd.h>

namespace mirenc {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

class ByteWriter {
public:
    explicit ByteWriter(const char* magic) { bytes_.insert(bytes_.end(), magic, magic + 4); u32(kFormatVersion); }

    void u32(std::uint32_t v)
    {
        for (int i = 0; i < 4; ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void f32(double v) { u32(std::bit_cast<std::uint32_t>(static_cast<float>(v))); }
    void size(Eigen::Index n)
    {
        require(n >= 0 && n <= 0xffffffffLL, "storage: dimension does not fit in u32");
        u32(static_cast<std::uint32_t>(n));
    }
    void matrix(const Eigen::MatrixXd& m)
    {
        for (Eigen::Index j = 0; j < m.cols(); ++j)
            for (Eigen::Index i = 0; i < m.rows(); ++i) f32(m(i, j));
    }
    void text(const std::string& s)
    {
        size(static_cast<Eigen::Index>(s.size()));
        bytes_.insert(bytes_.end(), s.begin(), s.end());
    }
    void trailer(json meta, const Lineage& lineage)
    {
        meta["lineage"] = lineage;
        text(meta.dump());
    }
    const std::vector<std::uint8_t>& bytes() const { return bytes_; }

private:
    std::vector<std::uint8_t> bytes_;
};

class ByteReader {
public:
    ByteReader(std::vector<std::uint8_t> bytes, fs::path source, const char* magic)
        : bytes_(std::move(bytes)), source_(std::move(source))
    {
        need(8);
        if (!std::equal(magic, magic + 4, bytes_.begin()))
            fail(ErrorKind::unsupported_format, source_.string() + ": expected a " + std::string(magic, 4) + " container");
        pos_ = 4;
        const std::uint32_t version = u32();
        if (version != kFormatVersion)
            fail(ErrorKind::version_mismatch, source_.string() + ": format version expected " +
                                                  std::to_string(kFormatVersion) + ", found " + std::to_string(version));
    }

    std::uint32_t u32()
    {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_ + i]) << (8 * i);
        pos_ += 4;
        return v;
    }
    double f32() { return static_cast<double>(std::bit_cast<float>(u32())); }
    Eigen::MatrixXd matrix(Eigen::Index rows, Eigen::Index cols)
    {
        need(static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols) * 4);
        Eigen::MatrixXd m(rows, cols);
        for (Eigen::Index j = 0; j < cols; ++j)
            for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = f32();
        return m;
    }
    std::string text()
    {
        const std::uint32_t n = u32();
        need(n);
        std::string s(bytes_.begin() + static_cast<std::ptrdiff_t>(pos_),
                      bytes_.begin() + static_cast<std::ptrdiff_t>(pos_ + n));
        pos_ += n;
        return s;
    }
    json trailer(Lineage& lineage)
    {
        json meta;
        try {
            meta = json::parse(text());
            lineage = meta.at("lineage").get<Lineage>();
        } catch (const json::exception& e) {
            fail(ErrorKind::unsupported_format, source_.string() + ": bad metadata trailer: " + e.what());
        }
        if (pos_ != bytes_.size()) fail(ErrorKind::unsupported_format, source_.string() + ": trailing bytes");
        return meta;
    }
    const fs::path& source() const { return source_; }

private:
    void need(std::size_t n) const
    {
        if (bytes_.size() - pos_ < n) fail(ErrorKind::io, source_.string() + ": truncated file");
    }

    std::vector<std::uint8_t> bytes_;
    fs::path source_;
    std::size_t pos_ = 0;
};

void check_finite(const Eigen::MatrixXd& m, const fs::path& path)
{
    require(m.allFinite(), path.string() + ": refusing to persist non-finite values", ErrorKind::numerical);
}

} // namespace

void verify_lineage(const Lineage& expected, const Lineage& found, const fs::path& source)
{
    std::string diff;
    for (const auto& [key, value] : expected) {
        const auto it = found.find(key);
        const std::string got = it == found.end() ? "<missing>" : it->second;
        if (got != value) diff += "\n  " + key + ": expected " + value + ", found " + got;
    }
    if (!diff.empty())
        fail(ErrorKind::version_mismatch, source.string() + ": stale or mismatched artifact, rerun the upstream stage" + diff);
}

void write_file_atomic(const fs::path& path, const std::vector<std::uint8_t>& bytes)
{
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    fs::path tmp = path;
    tmp += ".tmp" + std::to_string(::getpid());
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) fail(ErrorKind::io, "cannot write " + tmp.string());
        out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
        out.flush();
        if (!out) fail(ErrorKind::io, "write failed for " + tmp.string());
    }
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) {
        fs::remove(tmp);
        fail(ErrorKind::io, "cannot rename onto " + path.string() + ": " + ec.message());
    }
}

void write_text_atomic(const fs::path& path, const std::string& text)
{
    write_file_atomic(path, std::vector<std::uint8_t>(text.begin(), text.end()));
}

std::vector<std::uint8_t> read_file(const fs::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorKind::io, "cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// ---- frame matrices, standardizer, pca -------------------------------------

void write_frame_matrix(const fs::path& path, const FrameMatrix& frames, Lineage lineage)
{
    check_finite(frames.data, path);
    ByteWriter w("CBMF");
    w.size(frames.dim());
    w.size(frames.frames());
    w.matrix(frames.data);
    w.trailer({{"feature_kind", to_string(frames.kind)}}, lineage);
    write_file_atomic(path, w.bytes());
}

Artifact<FrameMatrix> read_frame_matrix(const fs::path& path)
{
    ByteReader r(read_file(path), path, "CBMF");
    const Eigen::Index d = r.u32();
    const Eigen::Index t = r.u32();
    Eigen::MatrixXd data = r.matrix(d, t);
    Artifact<FrameMatrix> out;
    const json meta = r.trailer(out.lineage);
    out.value = FrameMatrix(std::move(data), parse_feature_kind(meta.value("feature_kind", "")));
    return out;
}

void write_standardizer(const fs::path& path, const Standardizer& s, Lineage lineage)
{
    check_finite(s.mean, path);
    check_finite(s.stddev, path);
    ByteWriter w("CBST");
    w.size(s.dim());
    w.matrix(s.mean);
    w.matrix(s.stddev);
    w.trailer({{"floored_dims", s.floored_dims}}, lineage);
    write_file_atomic(path, w.bytes());
}

Artifact<Standardizer> read_standardizer(const fs::path& path)
{
    ByteReader r(read_file(path), path, "CBST");
    const Eigen::Index d = r.u32();
    Artifact<Standardizer> out;
    out.value.mean = r.matrix(d, 1);
    out.value.stddev = r.matrix(d, 1);
    const json meta = r.trailer(out.lineage);
    out.value.floored_dims = meta.value("floored_dims", std::vector<int>{});
    return out;
}

void write_pca(const fs::path& path, const PcaProjector& pca, Lineage lineage)
{
    check_finite(pca.projection, path);
    ByteWriter w("CBPC");
    w.size(pca.output_dim());
    w.size(pca.input_dim());
    w.matrix(pca.projection);
    w.matrix(pca.eigenvalues);
    w.trailer(json::object(), lineage);
    write_file_atomic(path, w.bytes());
}

Artifact<PcaProjector> read_pca(const fs::path& path)
{
    ByteReader r(read_file(path), path, "CBPC");
    const Eigen::Index p = r.u32();
    const Eigen::Index d = r.u32();
    Artifact<PcaProjector> out;
    out.value.projection = r.matrix(p, d);
    out.value.eigenvalues = r.matrix(p, 1);
    r.trailer(out.lineage);
    return out;
}

// ---- codebook ---------------------------------------------------------------

void write_codebook(const fs::path& path, const Codebook& codebook, Lineage lineage)
{
    check_finite(codebook.atoms(), path);
    ByteWriter w("CBDK");
    w.size(codebook.dim());
    w.size(codebook.size());
    w.matrix(codebook.atoms());
    const CodebookMeta& m = codebook.meta();
    w.trailer({{"algorithm", m.algorithm}, {"train_param", m.train_param}, {"seed", m.seed}, {"epochs", m.epochs}},
              lineage);
    write_file_atomic(path, w.bytes());
}

Artifact<Codebook> read_codebook(const fs::path& path)
{
    ByteReader r(read_file(path), path, "CBDK");
    const Eigen::Index d = r.u32();
    const Eigen::Index k = r.u32();
    Eigen::MatrixXd atoms = r.matrix(d, k);
    Artifact<Codebook> out;
    const json meta = r.trailer(out.lineage);
    CodebookMeta cm;
    cm.algorithm = meta.value("algorithm", "");
    cm.train_param = meta.value("train_param", 0.0);
    cm.seed = meta.value("seed", std::uint64_t{0});
    cm.epochs = meta.value("epochs", 0);
    // f32 storage keeps columns unit-norm to ~1e-7, well inside the codebook tolerance
    out.value = Codebook(std::move(atoms), cm);
    return out;
}

// ---- codes ------------------------------------------------------------------

void write_codes(const fs::path& path, const CodeMatrix& codes, Lineage lineage)
{
    require(codes.all_finite(), path.string() + ": refusing to persist non-finite values", ErrorKind::numerical);
    ByteWriter w("CBCM");
    w.size(codes.codes());
    w.size(codes.frames());
    w.u32(static_cast<std::uint32_t>(codes.storage()));
    if (codes.storage() == CodeMatrix::Storage::dense) {
        w.matrix(codes.dense());
    } else {
        const CodeMatrix::Sparse& s = codes.sparse();
        for (Eigen::Index t = 0; t < s.outerSize(); ++t) {
            w.size(s.col(t).nonZeros());
            for (CodeMatrix::Sparse::InnerIterator it(s, t); it; ++it) {
                w.size(it.row());
                w.f32(it.value());
            }
        }
    }
    w.trailer(json::object(), lineage);
    write_file_atomic(path, w.bytes());
}

Artifact<CodeMatrix> read_codes(const fs::path& path)
{
    ByteReader r(read_file(path), path, "CBCM");
    const Eigen::Index k = r.u32();
    const Eigen::Index t = r.u32();
    const std::uint32_t flag = r.u32();
    Artifact<CodeMatrix> out;
    if (flag == static_cast<std::uint32_t>(CodeMatrix::Storage::dense)) {
        out.value = CodeMatrix(r.matrix(k, t));
    } else if (flag == static_cast<std::uint32_t>(CodeMatrix::Storage::sparse)) {
        std::vector<Eigen::Triplet<double, int>> entries;
        for (Eigen::Index col = 0; col < t; ++col) {
            const std::uint32_t count = r.u32();
            for (std::uint32_t e = 0; e < count; ++e) {
                const std::uint32_t row = r.u32();
                if (row >= k) fail(ErrorKind::unsupported_format, path.string() + ": code index out of range");
                entries.emplace_back(static_cast<int>(row), static_cast<int>(col), r.f32());
            }
        }
        CodeMatrix::Sparse s(k, t);
        s.setFromTriplets(entries.begin(), entries.end());
        out.value = CodeMatrix(std::move(s));
    } else {
        fail(ErrorKind::unsupported_format, path.string() + ": unknown storage flag " + std::to_string(flag));
    }
    r.trailer(out.lineage);
    return out;
}

// ---- song vectors -----------------------------------------------------------

void write_song_vectors(const fs::path& path, const std::vector<SongVector>& vectors, Lineage lineage)
{
    const Eigen::Index k = vectors.empty() ? 0 : vectors.front().values.size();
    ByteWriter w("CBSV");
    w.size(k);
    w.size(static_cast<Eigen::Index>(vectors.size()));
    for (const SongVector& v : vectors) {
        require(v.values.size() == k, path.string() + ": song vectors differ in dimension");
        check_finite(v.values, path);
        w.text(v.song_id);
        w.matrix(v.values);
    }
    json meta = json::object();
    if (!vectors.empty()) meta = {{"pooling", to_string(vectors.front().pooling)}, {"ppk", vectors.front().ppk}};
    w.trailer(meta, lineage);
    write_file_atomic(path, w.bytes());
}

Artifact<std::vector<SongVector>> read_song_vectors(const fs::path& path)
{
    ByteReader r(read_file(path), path, "CBSV");
    const Eigen::Index k = r.u32();
    const std::uint32_t count = r.u32();
    Artifact<std::vector<SongVector>> out;
    out.value.resize(count);
    for (SongVector& v : out.value) {
        v.song_id = r.text();
        v.values = r.matrix(k, 1);
    }
    const json meta = r.trailer(out.lineage);
    const PoolingKind pooling = parse_pooling(meta.value("pooling", "mean"));
    const bool ppk = meta.value("ppk", false);
    for (SongVector& v : out.value) {
        v.pooling = pooling;
        v.ppk = ppk;
    }
    return out;
}

// ---- metric -----------------------------------------------------------------

void write_metric(const fs::path& path, const Metric& metric, Lineage lineage)
{
    check_finite(metric.W, path);
    require(metric.W.rows() == metric.W.cols(), "write_metric: W must be square");
    ByteWriter w("CBMW");
    w.size(metric.W.rows());
    w.u32(metric.reducer ? 1u : 0u);
    w.size(metric.reducer ? metric.reducer->input_dim() : metric.W.rows());
    w.matrix(metric.W);
    if (metric.reducer) {
        require(metric.reducer->output_dim() == metric.W.rows(), "write_metric: reducer and W disagree on dimension");
        w.matrix(metric.reducer->projection);
        w.matrix(metric.reducer->eigenvalues);
    }
    w.trailer({{"slack", metric.slack}}, lineage);
    write_file_atomic(path, w.bytes());
}

Artifact<Metric> read_metric(const fs::path& path)
{
    ByteReader r(read_file(path), path, "CBMW");
    const Eigen::Index m = r.u32();
    const bool has_reducer = r.u32() != 0;
    const Eigen::Index d = r.u32();
    Artifact<Metric> out;
    out.value.W = r.matrix(m, m);
    if (has_reducer) {
        PcaProjector pca;
        pca.projection = r.matrix(m, d);
        pca.eigenvalues = r.matrix(m, 1);
        out.value.reducer = std::move(pca);
    }
    const json meta = r.trailer(out.lineage);
    out.value.slack = meta.value("slack", 0.0);
    return out;
}

// ---- CSV --------------------------------------------------------------------

std::size_t CsvTable::column(const std::string& name) const
{
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) fail(ErrorKind::config, "csv: missing column '" + name + "'");
    return static_cast<std::size_t>(it - header.begin());
}

CsvTable read_csv(const fs::path& path)
{
    std::ifstream in(path);
    if (!in) fail(ErrorKind::io, "cannot open " + path.string());
    using Tokenizer = boost::tokenizer<boost::escaped_list_separator<char>>;
    const boost::escaped_list_separator<char> sep('\\', ',', '"');
    CsvTable table;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<std::string> fields;
        try {
            const Tokenizer tok(line, sep);
            fields.assign(tok.begin(), tok.end());
        } catch (const boost::escaped_list_error& e) {
            fail(ErrorKind::config, path.string() + ":" + std::to_string(line_no) + ": " + e.what());
        }
        if (table.header.empty()) {
            table.header = std::move(fields);
            continue;
        }
        if (fields.size() != table.header.size())
            fail(ErrorKind::config, path.string() + ":" + std::to_string(line_no) + ": expected " +
                                        std::to_string(table.header.size()) + " fields, found " +
                                        std::to_string(fields.size()));
        table.rows.push_back(std::move(fields));
    }
    if (table.header.empty()) fail(ErrorKind::empty_input, path.string() + ": no header row");
    return table;
}

namespace {

std::string quote(const std::string& field)
{
    if (field.find_first_of(",\"\\\n") == std::string::npos) return field;
    std::string out = "\"";
    for (char c : field) {
        if (c == '"' || c == '\\') out += '\\';
        out += c;
    }
    return out + "\"";
}

} // namespace

std::string format_csv(const CsvTable& table)
{
    std::string out;
    const auto line = [&out](const std::vector<std::string>& fields) {
        for (std::size_t i = 0; i < fields.size(); ++i) {
            if (i) out += ',';
            out += quote(fields[i]);
        }
        out += '\n';
    };
    line(table.header);
    for (const auto& row : table.rows) {
        require(row.size() == table.header.size(), "csv: row width differs from header");
        line(row);
    }
    return out;
}

void write_csv(const fs::path& path, const CsvTable& table)
{
    write_text_atomic(path, format_csv(table));
}

std::string format_number(double v)
{
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

double parse_number(const std::string& text, const std::string& context)
{
    double v = 0.0;
    const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
    if (res.ec != std::errc() || res.ptr != text.data() + text.size())
        fail(ErrorKind::config, context + ": not a number: '" + text + "'");
    return v;
}

void write_song_vectors_csv(const fs::path& path, const std::vector<SongVector>& vectors)
{
    CsvTable table;
    table.header.push_back("song_id");
    const Eigen::Index k = vectors.empty() ? 0 : vectors.front().values.size();
    for (Eigen::Index j = 0; j < k; ++j) table.header.push_back("v_" + std::to_string(j + 1));
    for (const SongVector& v : vectors) {
        std::vector<std::string> row{v.song_id};
        // values as stored in the binary table (f32)
        for (Eigen::Index j = 0; j < k; ++j) row.push_back(format_number(static_cast<float>(v.values[j])));
        table.rows.push_back(std::move(row));
    }
    write_csv(path, table);
}

} // namespace mirenc
