#include "ctxval/context_file.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <map>
#include <sstream>

namespace ctxval {

bool ExprMatrix::depends_on_g() const {
    auto dep = [](const GExpr& e) { return e.depends_on_g(); };
    return std::any_of(re.begin(), re.end(), dep) || std::any_of(im.begin(), im.end(), dep);
}

CMatrix ExprMatrix::eval(int dim) const {
    CMatrix m(dim, dim);
    for (int r = 0; r < dim; ++r) {
        for (int c = 0; c < dim; ++c) {
            const auto k = static_cast<std::size_t>(r * dim + c);
            m(r, c) = Complex(re[k].eval(0.0), im.empty() ? 0.0 : im[k].eval(0.0));
        }
    }
    return m;
}

ExprMatrix ExprMatrix::from(const CMatrix& m) {
    ExprMatrix out;
    bool imag = false;
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        for (Eigen::Index c = 0; c < m.cols(); ++c) {
            out.re.push_back(GExpr::number(m(r, c).real()));
            imag = imag || m(r, c).imag() != 0.0;
        }
    }
    if (imag) {
        for (Eigen::Index r = 0; r < m.rows(); ++r)
            for (Eigen::Index c = 0; c < m.cols(); ++c) out.im.push_back(GExpr::number(m(r, c).imag()));
    }
    return out;
}

MeasurementContext ContextFile::context() const {
    std::vector<GMatrixFn> ops;
    std::vector<std::string> labels;
    for (const Outcome& o : outcomes) {
        ops.emplace_back(dim, o.entries, validity);
        labels.push_back(o.label);
    }
    return MeasurementContext(std::move(ops), std::move(labels));
}

Observable ContextFile::make_observable() const { return Observable(observable.eval(dim)); }

std::optional<State> ContextFile::make_state() const {
    if (!state) return std::nullopt;
    return State(state->eval(dim));
}

std::optional<PostSelection> ContextFile::make_post() const {
    if (!post) return std::nullopt;
    return PostSelection(post->eval(dim));
}

namespace {

std::string trim(std::string_view s) {
    std::size_t b = 0;
    std::size_t e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return std::string(s.substr(b, e - b));
}

struct Line {
    std::size_t number;
    std::string text;  // comment stripped, not trimmed
};

class FileParser {
public:
    explicit FileParser(std::string_view text) {
        std::size_t n = 1;
        std::size_t start = 0;
        while (start <= text.size()) {
            std::size_t end = text.find('\n', start);
            if (end == std::string_view::npos) end = text.size();
            std::string line(text.substr(start, end - start));
            if (!line.empty() && line.back() == '\r') line.pop_back();
            if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
            if (!trim(line).empty()) lines_.push_back({n, line});
            ++n;
            start = end + 1;
        }
    }

    ContextFile parse() {
        ContextFile f;
        if (lines_.empty()) throw ContextFileError(1, 1, "empty context file");
        f.dim = parse_dim();
        bool have_grange = false;
        std::map<std::string, std::vector<GExpr>> numeric;
        while (pos_ < lines_.size()) {
            const Line& head = lines_[pos_];
            std::istringstream is(head.text);
            std::string keyword;
            is >> keyword;
            ++pos_;
            if (keyword == "DIM") throw error(head, "duplicate DIM");
            if (keyword == "GRANGE") {
                if (have_grange) throw error(head, "duplicate GRANGE");
                f.validity = parse_grange(head, is);
                have_grange = true;
            } else if (keyword == "OUTCOME") {
                std::string label;
                is >> label;
                std::string extra;
                if (is >> extra) throw error(head, "outcome label must be a single token");
                if (label.empty()) label = std::to_string(f.outcomes.size() + 1);
                for (const auto& o : f.outcomes) {
                    if (o.label == label) throw error(head, "duplicate outcome label '" + label + "'");
                }
                f.outcomes.push_back({label, parse_rows(f.dim, true)});
            } else if (keyword == "OBSERVABLE" || keyword == "OBSERVABLE.IM" || keyword == "STATE" ||
                       keyword == "STATE.IM" || keyword == "POST" || keyword == "POST.IM") {
                std::string extra;
                if (is >> extra) throw error(head, "unexpected text after " + keyword);
                if (numeric.count(keyword)) throw error(head, "duplicate " + keyword);
                numeric[keyword] = parse_rows(f.dim, false);
            } else {
                throw error(head, "unknown section '" + keyword + "'");
            }
        }
        const std::size_t last = lines_.back().number;
        if (f.outcomes.empty()) throw ContextFileError(last, 1, "no OUTCOME sections");
        auto take = [&](const std::string& name) -> std::optional<ExprMatrix> {
            auto re = numeric.find(name);
            auto im = numeric.find(name + ".IM");
            if (re == numeric.end()) {
                if (im != numeric.end()) throw ContextFileError(last, 1, name + ".IM without " + name);
                return std::nullopt;
            }
            ExprMatrix m;
            m.re = re->second;
            if (im != numeric.end()) m.im = im->second;
            return m;
        };
        auto obs = take("OBSERVABLE");
        if (!obs) throw ContextFileError(last, 1, "missing OBSERVABLE section");
        f.observable = std::move(*obs);
        f.state = take("STATE");
        f.post = take("POST");
        return f;
    }

private:
    static ContextFileError error(const Line& line, const std::string& msg, std::size_t column = 1) {
        return ContextFileError(line.number, column, msg);
    }

    int parse_dim() {
        const Line& head = lines_[pos_++];
        std::istringstream is(head.text);
        std::string keyword;
        is >> keyword;
        if (keyword != "DIM") throw error(head, "file must start with DIM");
        std::string token;
        is >> token;
        int dim = 0;
        const auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), dim);
        if (ec != std::errc() || ptr != token.data() + token.size() || dim < 1 || dim > 64) {
            throw error(head, "DIM must be an integer in [1, 64]");
        }
        std::string extra;
        if (is >> extra) throw error(head, "unexpected text after DIM");
        return dim;
    }

    Validity parse_grange(const Line& head, std::istringstream& is) {
        std::string lo_s;
        std::string hi_s;
        std::string extra;
        is >> lo_s >> hi_s;
        if (hi_s.empty() || (is >> extra)) throw error(head, "GRANGE needs exactly two numbers");
        auto number = [&](const std::string& s) {
            try {
                const GExpr e = GExpr::parse(s);
                if (e.depends_on_g()) throw error(head, "GRANGE bounds must be constants");
                return e.eval(0.0);
            } catch (const ParseError& pe) {
                throw error(head, "GRANGE: " + pe.message());
            }
        };
        Validity v{number(lo_s), number(hi_s)};
        if (!(v.lo >= 0.0 && v.hi > v.lo)) throw error(head, "GRANGE must satisfy 0 <= lo < hi");
        return v;
    }

    std::vector<GExpr> parse_rows(int dim, bool allow_g) {
        std::vector<GExpr> entries;
        for (int r = 0; r < dim; ++r) {
            if (pos_ >= lines_.size()) {
                throw ContextFileError(lines_.back().number + 1, 1,
                                       "expected " + std::to_string(dim) + " matrix rows");
            }
            const Line& line = lines_[pos_++];
            std::size_t start = 0;
            int count = 0;
            for (;;) {
                std::size_t comma = line.text.find(',', start);
                const std::size_t end = comma == std::string::npos ? line.text.size() : comma;
                const std::string_view piece = std::string_view(line.text).substr(start, end - start);
                try {
                    GExpr e = GExpr::parse(piece);
                    if (!allow_g && e.depends_on_g()) {
                        throw error(line, "numeric matrix entries must not depend on g", start + 1);
                    }
                    entries.push_back(std::move(e));
                } catch (const ParseError& pe) {
                    throw error(line, pe.message(), start + pe.offset() + 1);
                }
                ++count;
                if (comma == std::string::npos) break;
                start = comma + 1;
            }
            if (count != dim) {
                throw error(line, "row has " + std::to_string(count) + " entries, expected " + std::to_string(dim));
            }
        }
        return entries;
    }

    std::vector<Line> lines_;
    std::size_t pos_ = 0;
};

std::string shortest(double v) {
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    (void)ec;
    return std::string(buf, ptr);
}

void write_rows(std::ostringstream& os, int dim, const std::vector<GExpr>& entries) {
    for (int r = 0; r < dim; ++r) {
        for (int c = 0; c < dim; ++c) {
            if (c) os << ", ";
            os << entries[static_cast<std::size_t>(r * dim + c)].to_string();
        }
        os << '\n';
    }
}

void write_matrix(std::ostringstream& os, const std::string& name, int dim, const ExprMatrix& m) {
    os << '\n' << name << '\n';
    write_rows(os, dim, m.re);
    if (m.has_imag()) {
        os << '\n' << name << ".IM\n";
        write_rows(os, dim, m.im);
    }
}

}  // namespace

ContextFile parse_context(std::string_view text) { return FileParser(text).parse(); }

std::string write_context(const ContextFile& file) {
    std::ostringstream os;
    os << "# measurement context\n";
    os << "DIM " << file.dim << '\n';
    os << "GRANGE " << shortest(file.validity.lo) << ' ' << shortest(file.validity.hi) << '\n';
    for (const auto& o : file.outcomes) {
        os << "\nOUTCOME " << o.label << '\n';
        write_rows(os, file.dim, o.entries);
    }
    write_matrix(os, "OBSERVABLE", file.dim, file.observable);
    if (file.state) write_matrix(os, "STATE", file.dim, *file.state);
    if (file.post) write_matrix(os, "POST", file.dim, *file.post);
    return os.str();
}

}  // namespace ctxval
