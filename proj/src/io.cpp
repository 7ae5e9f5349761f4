#include "kpreg/io.hpp"

#include <fstream>
#include <sstream>

#include "kpreg/error.hpp"

namespace kpreg {

using nlohmann::json;

namespace {

void check_version(const json &doc, const char *what) {
    if (!doc.is_object()) throw ParseError(std::string(what) + ": top level must be an object");
    if (!doc.contains("format_version")) throw ParseError(std::string(what) + ": missing format_version");
    const json &v = doc.at("format_version");
    if (!v.is_string() || v.get<std::string>() != kFormatVersion) {
        throw ParseError(std::string(what) + ": unsupported format_version " + v.dump());
    }
}

ImageSize parse_size(const json &j, const std::string &pair_id, const char *field) {
    if (!j.is_array() || j.size() != 2) throw ParseError("pair '" + pair_id + "': " + field + " must be [w, h]");
    ImageSize s{j.at(0).get<double>(), j.at(1).get<double>()};
    if (!(s.width > 0.0 && s.height > 0.0)) {
        throw ValidationError("pair '" + pair_id + "': " + field + " must be positive");
    }
    return s;
}

PointSet parse_keypoints(const json &j, const ImageSize &size, const std::string &pair_id, const char *field) {
    if (!j.is_array()) throw ParseError("pair '" + pair_id + "': " + field + " must be a list");
    PointSet pts;
    pts.reserve(j.size());
    for (const auto &kp : j) {
        if (!kp.is_array() || kp.size() != 2) throw ParseError("pair '" + pair_id + "': keypoints must be [x, y]");
        const double x = kp.at(0).get<double>();
        const double y = kp.at(1).get<double>();
        if (!(x >= 0.0 && x <= size.width && y >= 0.0 && y <= size.height)) {
            std::ostringstream msg;
            msg << "pair '" << pair_id << "': keypoint (" << x << ", " << y << ") in " << field
                << " lies outside the " << size.width << "x" << size.height << " image";
            throw ValidationError(msg.str());
        }
        pts.push_back({x / size.width, y / size.height});
    }
    return pts;
}

json keypoints_to_json(const PointSet &pts, const ImageSize &size) {
    json a = json::array();
    for (const auto &p : pts) a.push_back({p.x * size.width, p.y * size.height});
    return a;
}

json optional_string(const std::optional<std::string> &s) { return s ? json(*s) : json(nullptr); }

std::optional<std::string> read_optional_string(const json &j, const char *key) {
    if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
    return j.at(key).get<std::string>();
}

std::string read_file(const std::filesystem::path &path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
    std::ostringstream ss;
    ss << in.rdbuf();
    if (in.bad()) throw IoError("error while reading '" + path.string() + "'");
    return ss.str();
}

json parse_json_text(const std::string &text, const std::filesystem::path &path) {
    try {
        return json::parse(text);
    } catch (const json::parse_error &e) {
        throw ParseError("'" + path.string() + "' is not valid JSON: " + e.what());
    }
}

} // namespace

std::vector<PairSample> parse_dataset(const json &doc) {
    check_version(doc, "dataset");
    if (!doc.contains("pairs") || !doc.at("pairs").is_array()) throw ParseError("dataset: 'pairs' must be a list");
    std::vector<PairSample> out;
    for (const auto &rec : doc.at("pairs")) {
        std::string pair_id = "<unnamed>";
        try {
            if (!rec.is_object()) throw ParseError("dataset: every pair record must be an object");
            pair_id = rec.at("pair_id").get<std::string>();
            PairSample s;
            s.pair_id = pair_id;
            s.source_id = read_optional_string(rec, "source_id").value_or(pair_id + "/a");
            s.target_id = read_optional_string(rec, "target_id").value_or(pair_id + "/b");
            s.category = read_optional_string(rec, "category");
            s.source_size = parse_size(rec.at("source_size"), pair_id, "source_size");
            s.target_size = parse_size(rec.at("target_size"), pair_id, "target_size");
            s.source = parse_keypoints(rec.at("source_keypoints"), s.source_size, pair_id, "source_keypoints");
            s.target = parse_keypoints(rec.at("target_keypoints"), s.target_size, pair_id, "target_keypoints");
            if (rec.contains("correspondence") && !rec.at("correspondence").is_null()) {
                CorrespondenceMap c;
                for (const auto &ij : rec.at("correspondence")) {
                    if (!ij.is_array() || ij.size() != 2) {
                        throw ParseError("pair '" + pair_id + "': correspondence entries must be [i, j]");
                    }
                    c.pairs.emplace_back(ij.at(0).get<std::size_t>(), ij.at(1).get<std::size_t>());
                }
                try {
                    c.validate(s.source.size(), s.target.size());
                } catch (const ValidationError &e) {
                    throw ValidationError("pair '" + pair_id + "': " + e.what());
                }
                s.correspondence = std::move(c);
            }
            out.push_back(std::move(s));
        } catch (const json::exception &e) {
            throw ParseError("pair '" + pair_id + "': " + e.what());
        }
    }
    return out;
}

std::vector<PairSample> load_dataset(const std::filesystem::path &path) {
    return parse_dataset(parse_json_text(read_file(path), path));
}

json dataset_to_json(std::span<const PairSample> samples) {
    json pairs = json::array();
    for (const auto &s : samples) {
        json rec;
        rec["pair_id"] = s.pair_id;
        rec["source_id"] = s.source_id;
        rec["target_id"] = s.target_id;
        rec["category"] = optional_string(s.category);
        rec["source_size"] = {s.source_size.width, s.source_size.height};
        rec["target_size"] = {s.target_size.width, s.target_size.height};
        rec["source_keypoints"] = keypoints_to_json(s.source, s.source_size);
        rec["target_keypoints"] = keypoints_to_json(s.target, s.target_size);
        if (s.correspondence) {
            json c = json::array();
            for (const auto &[i, j] : s.correspondence->pairs) c.push_back({i, j});
            rec["correspondence"] = std::move(c);
        }
        pairs.push_back(std::move(rec));
    }
    return {{"format_version", kFormatVersion}, {"pairs", std::move(pairs)}};
}

void save_dataset(std::span<const PairSample> samples, const std::filesystem::path &path) {
    write_text_file(path, dataset_to_json(samples).dump(2) + "\n");
}

json transform_to_json(const Transform &t) {
    switch (t.kind()) {
    case Transform::Kind::affine: return {{"kind", "affine"}, {"params", t.params()}};
    case Transform::Kind::tps:
        return {{"kind", "tps"}, {"params", t.params()}, {"regularization", t.tps_params().regularization}};
    case Transform::Kind::composed:
        return {{"kind", "composed"}, {"outer", transform_to_json(t.outer())}, {"inner", transform_to_json(t.inner())}};
    }
    return nullptr;
}

Transform transform_from_json(const json &j) {
    try {
        const std::string kind = j.at("kind").get<std::string>();
        if (kind == "affine") {
            return Transform::affine(AffineParams::from_array(j.at("params").get<std::vector<double>>()));
        }
        if (kind == "tps") {
            const auto p = j.at("params").get<std::vector<double>>();
            if (p.size() != kTpsParamCount) throw ParseError("tps transform needs 18 parameters");
            TpsParams tps;
            std::copy(p.begin(), p.end(), tps.displacements.begin());
            tps.regularization = j.value("regularization", 0.0);
            return Transform::tps(tps);
        }
        if (kind == "composed") {
            return compose(transform_from_json(j.at("outer")), transform_from_json(j.at("inner")));
        }
        throw ParseError("unknown transform kind '" + kind + "'");
    } catch (const json::exception &e) {
        throw ParseError(std::string("malformed transform: ") + e.what());
    } catch (const LengthMismatchError &e) {
        throw ParseError(std::string("malformed transform: ") + e.what());
    }
}

json results_to_json(const ResultsFile &r) {
    json pairs = json::array();
    for (const auto &p : r.pairs) {
        const RegistrationResult &reg = p.registration;
        pairs.push_back({{"pair_id", p.pair_id},
                         {"category", optional_string(p.category)},
                         {"pck", p.pck ? json(*p.pck) : json(nullptr)},
                         {"theta_ab", transform_to_json(reg.theta_ab)},
                         {"theta_ba", transform_to_json(reg.theta_ba)},
                         {"loss_trace", reg.loss_trace},
                         {"iterations_used", reg.iterations_used},
                         {"converged", reg.converged},
                         {"final_loss", reg.final_loss}});
    }
    json per_category = json::object();
    for (const auto &[cat, v] : r.report.per_category) per_category[cat] = v;
    json summary = {{"alpha", r.alpha},
                    {"mean_pck", r.report.mean},
                    {"evaluated_pairs", r.report.pair_ids},
                    {"per_pair_pck", r.report.per_pair},
                    {"per_category", std::move(per_category)}};
    return {{"format_version", kFormatVersion}, {"config", r.config}, {"pairs", std::move(pairs)}, {"summary", std::move(summary)}};
}

ResultsFile results_from_json(const json &doc) {
    check_version(doc, "results");
    ResultsFile r;
    try {
        r.config = doc.at("config");
        for (const auto &p : doc.at("pairs")) {
            PairResult pr;
            pr.pair_id = p.at("pair_id").get<std::string>();
            pr.category = read_optional_string(p, "category");
            if (!p.at("pck").is_null()) pr.pck = p.at("pck").get<double>();
            pr.registration.theta_ab = transform_from_json(p.at("theta_ab"));
            pr.registration.theta_ba = transform_from_json(p.at("theta_ba"));
            pr.registration.loss_trace = p.at("loss_trace").get<std::vector<double>>();
            pr.registration.iterations_used = p.at("iterations_used").get<int>();
            pr.registration.converged = p.at("converged").get<bool>();
            pr.registration.final_loss = p.at("final_loss").get<double>();
            r.pairs.push_back(std::move(pr));
        }
        const json &s = doc.at("summary");
        r.alpha = s.at("alpha").get<double>();
        r.report.mean = s.at("mean_pck").get<double>();
        r.report.pair_ids = s.at("evaluated_pairs").get<std::vector<std::string>>();
        r.report.per_pair = s.at("per_pair_pck").get<std::vector<double>>();
        r.report.per_category = s.at("per_category").get<std::map<std::string, double>>();
    } catch (const json::exception &e) {
        throw ParseError(std::string("malformed results file: ") + e.what());
    }
    return r;
}

void save_results(const ResultsFile &results, const std::filesystem::path &path) {
    write_text_file(path, results_to_json(results).dump(2) + "\n");
}

ResultsFile load_results(const std::filesystem::path &path) {
    return results_from_json(parse_json_text(read_file(path), path));
}

void write_text_file(const std::filesystem::path &path, const std::string &contents) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
    out << contents;
    out.close();
    if (!out) throw IoError("error while writing '" + path.string() + "'");
}

} // namespace kpreg
