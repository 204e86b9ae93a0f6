#include "nrinit/case_io.hpp"

#include <map>
#include <optional>
#include <sstream>
#include <vector>

#include "nrinit/error.hpp"
#include "nrinit/io_util.hpp"

namespace nrinit {

namespace {

[[noreturn]] void schema_error(const std::string& field, const std::string& detail) {
    throw InputError("case file: field '" + field + "': " + detail);
}

double need_num(std::string_view tok, const std::string& field) {
    double v = 0.0;
    if (!parse_num(tok, v)) schema_error(field, "expected a number, got '" + std::string(tok) + "'");
    return v;
}

long need_int(std::string_view tok, const std::string& field) {
    long v = 0;
    if (!parse_int(tok, v)) schema_error(field, "expected an integer, got '" + std::string(tok) + "'");
    return v;
}

}  // namespace

GridCase parse_case(std::string_view text) {
    std::string section;
    std::map<std::string, std::map<std::string, std::string>> kv;
    std::vector<std::vector<std::string>> line_rows;
    std::vector<std::vector<std::string>> inj_rows;
    std::vector<std::string> g_rows;
    std::vector<std::string> b_rows;
    bool saw_lines = false;
    bool saw_matrix = false;

    std::size_t pos = 0;
    int lineno = 0;
    while (pos <= text.size()) {
        auto nl = text.find('\n', pos);
        if (nl == std::string_view::npos) nl = text.size();
        std::string_view raw = text.substr(pos, nl - pos);
        pos = nl + 1;
        ++lineno;
        if (auto hash = raw.find('#'); hash != std::string_view::npos) raw = raw.substr(0, hash);
        raw = trim(raw);
        if (raw.empty()) continue;

        if (raw.front() == '[') {
            if (raw.back() != ']') schema_error("section", "unterminated header on line " + std::to_string(lineno));
            section = std::string(raw.substr(1, raw.size() - 2));
            if (section == "lines") saw_lines = true;
            else if (section == "matrix") saw_matrix = true;
            else if (section != "buses" && section != "slack" && section != "injections")
                schema_error(section, "unknown section");
            continue;
        }
        if (section.empty()) schema_error("section", "data before first section on line " + std::to_string(lineno));

        if (section == "buses" || section == "slack") {
            auto eq = raw.find('=');
            if (eq == std::string_view::npos) schema_error(section, "expected key = value on line " + std::to_string(lineno));
            kv[section][std::string(trim(raw.substr(0, eq)))] = std::string(trim(raw.substr(eq + 1)));
        } else if (section == "matrix") {
            auto eq = raw.find('=');
            if (eq == std::string_view::npos) schema_error("matrix", "expected 'G = ...' or 'B = ...' on line " + std::to_string(lineno));
            auto key = trim(raw.substr(0, eq));
            auto val = std::string(trim(raw.substr(eq + 1)));
            if (key == "G") g_rows.push_back(val);
            else if (key == "B") b_rows.push_back(val);
            else schema_error("matrix." + std::string(key), "expected G or B");
        } else {
            std::vector<std::string> row;
            for (auto t : split_ws(raw)) row.emplace_back(t);
            (section == "lines" ? line_rows : inj_rows).push_back(std::move(row));
        }
    }

    auto get = [&](const std::string& sec, const std::string& key) -> std::optional<std::string> {
        auto s = kv.find(sec);
        if (s == kv.end()) return std::nullopt;
        auto k = s->second.find(key);
        if (k == s->second.end()) return std::nullopt;
        return k->second;
    };

    auto count_s = get("buses", "count");
    if (!count_s) schema_error("buses.count", "missing");
    const long n = need_int(*count_s, "buses.count");
    if (n < 2) schema_error("buses.count", "N >= 2 required, got " + std::to_string(n));

    long slack_bus = 1;
    if (auto s = get("slack", "bus")) slack_bus = need_int(*s, "slack.bus");
    if (slack_bus < 1 || slack_bus > n) schema_error("slack.bus", "out of range 1.." + std::to_string(n));
    ComplexPhasor slack_v{1.0, 0.0};
    if (auto s = get("slack", "magnitude")) slack_v.magnitude = need_num(*s, "slack.magnitude");
    if (auto s = get("slack", "angle_deg")) slack_v.angle = deg_to_rad(need_num(*s, "slack.angle_deg"));

    Eigen::VectorXd p = Eigen::VectorXd::Zero(n);
    Eigen::VectorXd q = Eigen::VectorXd::Zero(n);
    for (std::size_t r = 0; r < inj_rows.size(); ++r) {
        const auto& row = inj_rows[r];
        const std::string field = "injections[" + std::to_string(r + 1) + "]";
        if (row.size() != 3) schema_error(field, "expected 3 fields (bus P Q), got " + std::to_string(row.size()));
        const long bus = need_int(row[0], field + ".bus");
        if (bus < 1 || bus > n) schema_error(field + ".bus", "out of range 1.." + std::to_string(n));
        p[bus - 1] = need_num(row[1], field + ".P");
        q[bus - 1] = need_num(row[2], field + ".Q");
    }

    if (saw_lines == saw_matrix) schema_error("lines/matrix", "exactly one of [lines] or [matrix] is required");

    if (saw_lines) {
        std::vector<LineSpec> lines;
        for (std::size_t r = 0; r < line_rows.size(); ++r) {
            const auto& row = line_rows[r];
            const std::string field = "lines[" + std::to_string(r + 1) + "]";
            if (row.size() != 5) schema_error(field, "expected 5 fields (from to R X shunt), got " + std::to_string(row.size()));
            LineSpec l;
            l.from = static_cast<int>(need_int(row[0], field + ".from")) - 1;
            l.to = static_cast<int>(need_int(row[1], field + ".to")) - 1;
            l.r = need_num(row[2], field + ".R");
            l.x = need_num(row[3], field + ".X");
            l.shunt = need_num(row[4], field + ".shunt");
            lines.push_back(l);
        }
        return GridCase(static_cast<int>(n), std::move(lines), p, q, static_cast<int>(slack_bus - 1), slack_v);
    }

    auto fill = [&](const std::vector<std::string>& rows, const std::string& name) {
        if (static_cast<long>(rows.size()) != n)
            schema_error("matrix." + name, "expected " + std::to_string(n) + " rows, got " + std::to_string(rows.size()));
        Eigen::MatrixXd m(n, n);
        for (long i = 0; i < n; ++i) {
            auto toks = split_ws(rows[i]);
            const std::string field = "matrix." + name + "[" + std::to_string(i + 1) + "]";
            if (static_cast<long>(toks.size()) != n)
                schema_error(field, "expected " + std::to_string(n) + " entries, got " + std::to_string(toks.size()));
            for (long j = 0; j < n; ++j) m(i, j) = need_num(toks[j], field);
        }
        return m;
    };
    Eigen::MatrixXd g = fill(g_rows, "G");
    Eigen::MatrixXd b = fill(b_rows, "B");
    return GridCase(std::move(g), std::move(b), p, q, static_cast<int>(slack_bus - 1), slack_v);
}

std::string format_case(const GridCase& c) {
    std::ostringstream out;
    const int n = c.n_buses();
    out << "[buses]\ncount = " << n << "\n\n";
    out << "[slack]\nbus = " << c.slack_index() + 1 << "\n"
        << "magnitude = " << fmt_num(c.slack_voltage().magnitude) << "\n"
        << "angle_deg = " << fmt_num(rad_to_deg(c.slack_voltage().angle)) << "\n\n";
    if (c.lines()) {
        out << "[lines]\n# from to R X shunt\n";
        for (const auto& l : *c.lines()) {
            out << l.from + 1 << ' ' << l.to + 1 << ' ' << fmt_num(l.r) << ' ' << fmt_num(l.x) << ' '
                << fmt_num(l.shunt) << '\n';
        }
    } else {
        out << "[matrix]\n";
        for (const auto* m : {&c.conductance(), &c.susceptance()}) {
            const char* tag = (m == &c.conductance()) ? "G" : "B";
            for (int i = 0; i < n; ++i) {
                out << tag << " =";
                for (int j = 0; j < n; ++j) out << ' ' << fmt_num((*m)(i, j));
                out << '\n';
            }
        }
    }
    out << "\n[injections]\n# bus P Q\n";
    for (int i = 0; i < n; ++i) {
        if (c.p_injection()[i] != 0.0 || c.q_injection()[i] != 0.0) {
            out << i + 1 << ' ' << fmt_num(c.p_injection()[i]) << ' ' << fmt_num(c.q_injection()[i]) << '\n';
        }
    }
    return out.str();
}

GridCase load_case(const std::filesystem::path& path) { return parse_case(read_file(path)); }

void save_case(const GridCase& c, const std::filesystem::path& path) {
    write_file_atomic(path, format_case(c));
}

}  // namespace nrinit
