#include "fieldtest/io.hpp"

#include <charconv>
#include <fstream>
#include <map>
#include <sstream>
#include <unordered_map>

namespace fieldtest::io {

namespace {

std::vector<std::string> split(const std::string& line)
{
    std::vector<std::string> fields;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            fields.push_back(std::move(cur));
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    fields.push_back(std::move(cur));
    return fields;
}

class CsvReader {
public:
    CsvReader(const fs::path& path, const std::string& header) : path_(path), in_(path)
    {
        if (!in_) throw ParseError("cannot open '" + path.string() + "'");
        std::string line;
        if (!next_line(line) || line != header)
            throw ParseError(path.string() + ": expected header '" + header + "'");
        width_ = split(header).size();
    }

    bool next(std::vector<std::string>& fields)
    {
        std::string line;
        while (next_line(line)) {
            if (line.empty()) continue;
            fields = split(line);
            if (fields.size() != width_)
                throw ParseError(where() + ": expected " + std::to_string(width_) + " fields");
            return true;
        }
        return false;
    }

    std::string where() const { return path_.string() + ":" + std::to_string(line_no_); }

private:
    bool next_line(std::string& line)
    {
        if (!std::getline(in_, line)) return false;
        ++line_no_;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        return true;
    }

    fs::path path_;
    std::ifstream in_;
    std::size_t width_ = 0;
    std::size_t line_no_ = 0;
};

std::ofstream open_out(const fs::path& path)
{
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ParseError("cannot write '" + path.string() + "'");
    return out;
}

const std::string& csv_field(const std::string& s)
{
    if (s.find_first_of(",\"\r\n") != std::string::npos)
        throw ValidationError("identifier '" + s + "' contains a character not allowed in CSV fields");
    return s;
}

int parse_int(const std::string& text, const std::string& context)
{
    int v = 0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc{} || ptr != text.data() + text.size())
        throw ParseError(context + ": '" + text + "' is not an integer");
    return v;
}

} // namespace

std::string format_double(double x)
{
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, x);
    if (ec != std::errc{}) throw ParseError("cannot format number");
    return std::string(buf, ptr);
}

double parse_double(const std::string& text, const std::string& context)
{
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc{} || ptr != text.data() + text.size())
        throw ParseError(context + ": '" + text + "' is not a number");
    return v;
}

nlohmann::json read_json(const fs::path& path)
{
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open '" + path.string() + "'");
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
}

void write_json(const fs::path& path, const nlohmann::json& doc)
{
    auto out = open_out(path);
    out << doc.dump(2) << '\n';
}

ItemBank read_item_bank(const fs::path& path)
{
    const nlohmann::json doc = read_json(path);
    ItemBank bank;
    try {
        if (!doc.is_object() || !doc.contains("items") || !doc.at("items").is_array())
            throw ParseError(path.string() + ": item bank must be an object with an 'items' array");
        if (doc.contains("metadata")) {
            if (!doc.at("metadata").is_object()) throw ParseError(path.string() + ": 'metadata' must be an object");
            bank.metadata = doc.at("metadata");
        }
        for (const auto& it : doc.at("items")) {
            Item item;
            item.id = it.at("id").get<std::string>();
            try {
                item.stem = it.at("stem").get<std::string>();
                item.options = it.at("options").get<std::vector<std::string>>();
                item.key = it.at("key").get<int>();
            } catch (const nlohmann::json::exception& e) {
                throw ParseError(path.string() + ": item '" + item.id + "': " + e.what());
            }
            bank.items.push_back(std::move(item));
        }
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
    bank.validate();
    return bank;
}

void write_item_bank(const fs::path& path, const ItemBank& bank)
{
    bank.validate();
    nlohmann::json items = nlohmann::json::array();
    for (const auto& item : bank.items)
        items.push_back({{"id", item.id}, {"stem", item.stem}, {"options", item.options}, {"key", item.key}});
    write_json(path, {{"metadata", bank.metadata}, {"items", items}});
}

void write_option_probs(const fs::path& path, const OptionProbMatrix& m)
{
    auto out = open_out(path);
    out << "examinee_id,item_id,option_index,prob\n";
    for (std::size_t i = 0; i < m.n_examinees(); ++i) {
        const auto& eid = csv_field(m.examinee_ids[i]);
        for (std::size_t j = 0; j < m.n_items(); ++j) {
            const auto& iid = csv_field(m.item_ids[j]);
            auto v = m.cell(Eigen::Index(i), Eigen::Index(j));
            for (Eigen::Index o = 0; o < v.size(); ++o)
                out << eid << ',' << iid << ',' << o << ',' << format_double(v(o)) << '\n';
        }
    }
}

OptionProbMatrix read_option_probs(const fs::path& path, const ItemBank& bank)
{
    CsvReader csv(path, "examinee_id,item_id,option_index,prob");
    struct Cell {
        std::vector<double> probs;
        std::vector<bool> seen;
    };
    std::vector<std::string> examinees;
    std::unordered_map<std::string, std::size_t> examinee_index;
    std::vector<std::map<int, Cell>> rows; // per examinee: bank item index -> cell
    std::vector<bool> item_used(bank.size(), false);

    std::vector<std::string> f;
    while (csv.next(f)) {
        const std::string ctx = csv.where();
        auto [pos, inserted] = examinee_index.try_emplace(f[0], examinees.size());
        if (inserted) {
            examinees.push_back(f[0]);
            rows.emplace_back();
        } else if (pos->second != examinees.size() - 1) {
            throw ParseError(ctx + ": rows for examinee '" + f[0] + "' are not contiguous");
        }
        const int j = bank.index_of(f[1]);
        if (j < 0) throw ValidationError(ctx + ": item '" + f[1] + "' is not in the bank");
        item_used[static_cast<std::size_t>(j)] = true;
        const int k = bank.items[static_cast<std::size_t>(j)].n_options();
        const int o = parse_int(f[2], ctx);
        if (o < 0 || o >= k) throw ValidationError(ctx + ": option index out of range for item '" + f[1] + "'");
        Cell& cell = rows.back()[j];
        if (cell.probs.empty()) {
            cell.probs.assign(static_cast<std::size_t>(k), 0.0);
            cell.seen.assign(static_cast<std::size_t>(k), false);
        }
        if (cell.seen[static_cast<std::size_t>(o)])
            throw ValidationError(ctx + ": duplicate row for examinee '" + f[0] + "' item '" + f[1] + "'");
        cell.seen[static_cast<std::size_t>(o)] = true;
        cell.probs[static_cast<std::size_t>(o)] = parse_double(f[3], ctx);
    }
    if (examinees.empty()) throw ValidationError(path.string() + ": no rows");

    ItemBank used;
    used.metadata = bank.metadata;
    for (std::size_t j = 0; j < bank.size(); ++j)
        if (item_used[j]) used.items.push_back(bank.items[j]);
    OptionProbMatrix m = OptionProbMatrix::shaped_for(used, examinees);
    for (std::size_t i = 0; i < examinees.size(); ++i) {
        for (std::size_t j = 0; j < used.size(); ++j) {
            const int bj = bank.index_of(used.items[j].id);
            auto it = rows[i].find(bj);
            if (it == rows[i].end())
                throw ValidationError(path.string() + ": examinee '" + examinees[i] + "' has no rows for item '" +
                                      used.items[j].id + "'");
            for (std::size_t o = 0; o < it->second.seen.size(); ++o)
                if (!it->second.seen[o])
                    throw ValidationError(path.string() + ": examinee '" + examinees[i] + "' item '" +
                                          used.items[j].id + "' is missing option " + std::to_string(o));
            m.cell(Eigen::Index(i), Eigen::Index(j)) =
                Eigen::Map<const Eigen::RowVectorXd>(it->second.probs.data(), Eigen::Index(it->second.probs.size()));
        }
    }
    m.validate(bank);
    return m;
}

void write_retention(const fs::path& path, const std::vector<std::string>& examinee_ids,
                     const Eigen::Ref<const VectorXd>& retention)
{
    if (retention.size() != static_cast<Eigen::Index>(examinee_ids.size()))
        throw ValidationError("retention length does not match examinee list");
    auto out = open_out(path);
    out << "examinee_id,retention\n";
    for (std::size_t i = 0; i < examinee_ids.size(); ++i)
        out << csv_field(examinee_ids[i]) << ',' << format_double(retention(Eigen::Index(i))) << '\n';
}

VectorXd read_retention(const fs::path& path, const std::vector<std::string>& examinee_ids)
{
    CsvReader csv(path, "examinee_id,retention");
    std::unordered_map<std::string, double> values;
    std::vector<std::string> f;
    while (csv.next(f)) {
        double r = parse_double(f[1], csv.where());
        if (!(r >= 0.0 && r <= 1.0)) throw ValidationError(csv.where() + ": retention outside [0,1]");
        if (!values.emplace(f[0], r).second) throw ValidationError(csv.where() + ": duplicate examinee '" + f[0] + "'");
    }
    VectorXd out(static_cast<Eigen::Index>(examinee_ids.size()));
    for (std::size_t i = 0; i < examinee_ids.size(); ++i) {
        auto it = values.find(examinee_ids[i]);
        if (it == values.end())
            throw ValidationError(path.string() + ": no retention for examinee '" + examinee_ids[i] + "'");
        out(Eigen::Index(i)) = it->second;
    }
    return out;
}

void write_responses(const fs::path& path, const ResponseMatrix& r)
{
    auto out = open_out(path);
    out << "examinee_id,item_id,chosen,scored\n";
    for (Eigen::Index i = 0; i < r.n_examinees(); ++i) {
        const auto& eid = csv_field(r.examinee_ids[static_cast<std::size_t>(i)]);
        for (Eigen::Index j = 0; j < r.n_items(); ++j)
            out << eid << ',' << csv_field(r.item_ids[static_cast<std::size_t>(j)]) << ',' << r.chosen(i, j) << ','
                << r.scored(i, j) << '\n';
    }
}

ResponseMatrix read_responses(const fs::path& path, const ItemBank& bank)
{
    CsvReader csv(path, "examinee_id,item_id,chosen,scored");
    std::vector<std::string> examinees;
    std::unordered_map<std::string, std::size_t> examinee_index;
    std::vector<std::map<int, std::pair<int, int>>> rows;
    std::vector<bool> item_used(bank.size(), false);

    std::vector<std::string> f;
    while (csv.next(f)) {
        const std::string ctx = csv.where();
        auto [pos, inserted] = examinee_index.try_emplace(f[0], examinees.size());
        if (inserted) {
            examinees.push_back(f[0]);
            rows.emplace_back();
        } else if (pos->second != examinees.size() - 1) {
            throw ParseError(ctx + ": rows for examinee '" + f[0] + "' are not contiguous");
        }
        const int j = bank.index_of(f[1]);
        if (j < 0) throw ValidationError(ctx + ": item '" + f[1] + "' is not in the bank");
        item_used[static_cast<std::size_t>(j)] = true;
        const int chosen = parse_int(f[2], ctx);
        const int scored = parse_int(f[3], ctx);
        if (!rows.back().emplace(j, std::pair{chosen, scored}).second)
            throw ValidationError(ctx + ": duplicate row for examinee '" + f[0] + "' item '" + f[1] + "'");
    }
    if (examinees.empty()) throw ValidationError(path.string() + ": no rows");

    ResponseMatrix r;
    r.examinee_ids = examinees;
    std::vector<int> cols;
    for (std::size_t j = 0; j < bank.size(); ++j)
        if (item_used[j]) {
            cols.push_back(static_cast<int>(j));
            r.item_ids.push_back(bank.items[j].id);
        }
    const auto n = static_cast<Eigen::Index>(examinees.size());
    const auto k = static_cast<Eigen::Index>(cols.size());
    r.chosen.resize(n, k);
    r.scored.resize(n, k);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index c = 0; c < k; ++c) {
            auto it = rows[static_cast<std::size_t>(i)].find(cols[static_cast<std::size_t>(c)]);
            if (it == rows[static_cast<std::size_t>(i)].end())
                throw ValidationError(path.string() + ": examinee '" + examinees[static_cast<std::size_t>(i)] +
                                      "' has no response to item '" + r.item_ids[static_cast<std::size_t>(c)] + "'");
            r.chosen(i, c) = it->second.first;
            r.scored(i, c) = it->second.second;
        }
    }
    r.validate(bank);
    return r;
}

void write_params(const fs::path& path, const ParamSet& params)
{
    auto out = open_out(path);
    out << "item_id,a,b\n";
    for (const auto& p : params)
        out << csv_field(p.item_id) << ',' << format_double(p.a) << ',' << format_double(p.b) << '\n';
}

ParamSet read_params(const fs::path& path)
{
    CsvReader csv(path, "item_id,a,b");
    ParamSet params;
    std::vector<std::string> f;
    while (csv.next(f)) {
        ItemParams2PL p{f[0], parse_double(f[1], csv.where()), parse_double(f[2], csv.where())};
        if (!std::isfinite(p.a) || !std::isfinite(p.b))
            throw ValidationError(csv.where() + ": non-finite parameter for item '" + p.item_id + "'");
        for (const auto& q : params)
            if (q.item_id == p.item_id) throw ValidationError(csv.where() + ": duplicate item '" + p.item_id + "'");
        params.push_back(std::move(p));
    }
    return params;
}

void write_group(const fs::path& path, const GroupDist& group)
{
    auto out = open_out(path);
    out << "mean,sd\n" << format_double(group.mean) << ',' << format_double(group.sd) << '\n';
}

GroupDist read_group(const fs::path& path)
{
    CsvReader csv(path, "mean,sd");
    std::vector<std::string> f;
    if (!csv.next(f)) throw ParseError(path.string() + ": no group row");
    GroupDist g{parse_double(f[0], csv.where()), parse_double(f[1], csv.where())};
    g.validate();
    return g;
}

void write_abilities(const fs::path& path, const std::vector<AbilityEstimate>& abilities)
{
    auto out = open_out(path);
    out << "examinee_id,theta,se\n";
    for (const auto& e : abilities) {
        out << csv_field(e.examinee_id) << ',' << format_double(e.theta) << ',';
        if (e.se) out << format_double(*e.se);
        out << '\n';
    }
}

std::vector<AbilityEstimate> read_abilities(const fs::path& path)
{
    CsvReader csv(path, "examinee_id,theta,se");
    std::vector<AbilityEstimate> out;
    std::vector<std::string> f;
    while (csv.next(f)) {
        AbilityEstimate e{f[0], parse_double(f[1], csv.where()), std::nullopt};
        if (!f[2].empty()) e.se = parse_double(f[2], csv.where());
        out.push_back(std::move(e));
    }
    return out;
}

void write_profiles(const fs::path& path, const std::vector<ExamineeProfile>& profiles)
{
    auto out = open_out(path);
    out << "examinee_id,retention,theta_true\n";
    for (const auto& p : profiles)
        out << csv_field(p.id) << ',' << format_double(p.retention) << ',' << format_double(p.theta_true) << '\n';
}

std::vector<ExamineeProfile> read_profiles(const fs::path& path)
{
    CsvReader csv(path, "examinee_id,retention,theta_true");
    std::vector<ExamineeProfile> out;
    std::vector<std::string> f;
    while (csv.next(f))
        out.push_back({f[0], parse_double(f[1], csv.where()), parse_double(f[2], csv.where())});
    return out;
}

void write_ctt(const fs::path& path, const CttTable& table)
{
    write_json(path, nlohmann::json(table));
}

CttTable read_ctt(const fs::path& path)
{
    try {
        return read_json(path).get<CttTable>();
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
}

void write_report(const fs::path& path, const Report& report)
{
    write_json(path, nlohmann::json(report));
}

Report read_report(const fs::path& path)
{
    try {
        return read_json(path).get<Report>();
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
}

EngineConfig read_config(const fs::path& path)
{
    EngineConfig c;
    try {
        c = read_json(path).get<EngineConfig>();
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
    c.validate();
    return c;
}

} // namespace fieldtest::io
