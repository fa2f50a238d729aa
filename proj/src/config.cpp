#include "mxt/config.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>

namespace mxt {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
    std::size_t pos = 0;
    unsigned long long r = 0;
    try {
        r = std::stoull(v, &pos);
    } catch (const std::exception&) {
        pos = 0;
    }
    if (pos == 0 || pos != v.size() || v[0] == '-') {
        throw ParseError(key + ": expected a non-negative integer, got '" + v + "'");
    }
    return r;
}

double to_double(const std::string& key, const std::string& v) {
    std::size_t pos = 0;
    double r = 0;
    try {
        r = std::stod(v, &pos);
    } catch (const std::exception&) {
        pos = 0;
    }
    if (pos == 0 || pos != v.size()) throw ParseError(key + ": expected a number, got '" + v + "'");
    return r;
}

bool to_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1" || v == "on") return true;
    if (v == "false" || v == "0" || v == "off") return false;
    throw ParseError(key + ": expected true or false, got '" + v + "'");
}

std::string num(double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

}  // namespace

void OptimizerConfig::validate() const {
    if (!(lr > 0)) throw ContractError("optim.lr must be > 0");
    if (!(beta1 >= 0 && beta1 < 1) || !(beta2 >= 0 && beta2 < 1)) {
        throw ContractError("optim.beta1 and optim.beta2 must lie in [0, 1)");
    }
    if (!(eps > 0)) throw ContractError("optim.eps must be > 0");
}

void RunConfig::validate() const {
    model.validate();
    optim.validate();
    loss.validate();
    if (batch_size == 0) throw ContractError("train.batch_size must be >= 1");
    if (dataset_size == 0) throw ContractError("data.size must be >= 1");
    if (image_size < 16 || image_size % 8 != 0) {
        throw ContractError("data.image_size must be a multiple of 8 and at least 16");
    }
}

std::vector<std::pair<std::string, std::string>> RunConfig::entries() const {
    auto out = model.entries();
    auto b = [](bool v) { return std::string(v ? "true" : "false"); };
    const std::vector<std::pair<std::string, std::string>> rest = {
        {"optim.lr", num(optim.lr)},
        {"optim.beta1", num(optim.beta1)},
        {"optim.beta2", num(optim.beta2)},
        {"optim.eps", num(optim.eps)},
        {"loss.alpha1", num(loss.l1)},
        {"loss.alpha2", num(loss.style)},
        {"loss.alpha3", num(loss.perceptual)},
        {"loss.alpha4", num(loss.adversarial)},
        {"loss.gan", gan == GanLoss::hinge ? "hinge" : "non-saturating"},
        {"loss.on_composite", b(loss_on_composite)},
        {"loss.extractor_seed", std::to_string(extractor_seed)},
        {"train.batch_size", std::to_string(batch_size)},
        {"train.iterations", std::to_string(iterations)},
        {"train.seed", std::to_string(seed)},
        {"train.precision", precision == Precision::f64 ? "double" : "float"},
        {"train.checkpoint", checkpoint},
        {"train.checkpoint_every", std::to_string(checkpoint_every)},
        {"train.log_every", std::to_string(log_every)},
        {"data.dir", data_dir},
        {"data.size", std::to_string(dataset_size)},
        {"data.image_size", std::to_string(image_size)},
    };
    out.insert(out.end(), rest.begin(), rest.end());
    return out;
}

void RunConfig::set(const std::string& key, const std::string& value) {
    if (key.rfind("model.", 0) == 0) {
        if (!model.set(key.substr(6), value)) throw UsageError("unknown config key '" + key + "'");
        return;
    }
    if (key == "optim.lr") optim.lr = to_double(key, value);
    else if (key == "optim.beta1") optim.beta1 = to_double(key, value);
    else if (key == "optim.beta2") optim.beta2 = to_double(key, value);
    else if (key == "optim.eps") optim.eps = to_double(key, value);
    else if (key == "loss.alpha1") loss.l1 = to_double(key, value);
    else if (key == "loss.alpha2") loss.style = to_double(key, value);
    else if (key == "loss.alpha3") loss.perceptual = to_double(key, value);
    else if (key == "loss.alpha4") loss.adversarial = to_double(key, value);
    else if (key == "loss.gan") {
        if (value == "hinge") gan = GanLoss::hinge;
        else if (value == "non-saturating") gan = GanLoss::non_saturating;
        else throw ParseError(key + ": expected non-saturating or hinge, got '" + value + "'");
    } else if (key == "loss.on_composite") loss_on_composite = to_bool(key, value);
    else if (key == "loss.extractor_seed") extractor_seed = to_u64(key, value);
    else if (key == "train.batch_size") batch_size = to_u64(key, value);
    else if (key == "train.iterations") iterations = to_u64(key, value);
    else if (key == "train.seed") seed = to_u64(key, value);
    else if (key == "train.precision") {
        if (value == "float") precision = Precision::f32;
        else if (value == "double") precision = Precision::f64;
        else throw ParseError(key + ": expected float or double, got '" + value + "'");
    } else if (key == "train.checkpoint") checkpoint = value;
    else if (key == "train.checkpoint_every") checkpoint_every = to_u64(key, value);
    else if (key == "train.log_every") log_every = to_u64(key, value);
    else if (key == "data.dir") data_dir = value;
    else if (key == "data.size") dataset_size = to_u64(key, value);
    else if (key == "data.image_size") image_size = to_u64(key, value);
    else throw UsageError("unknown config key '" + key + "'");
}

std::vector<std::pair<std::string, std::string>> parse_key_values(const std::string& text,
                                                                  const std::string& origin) {
    std::vector<std::pair<std::string, std::string>> out;
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ParseError(origin + ":" + std::to_string(lineno) + ": expected 'key = value'");
        }
        auto key = trim(line.substr(0, eq));
        if (key.empty()) throw ParseError(origin + ":" + std::to_string(lineno) + ": empty key");
        out.emplace_back(std::move(key), trim(line.substr(eq + 1)));
    }
    return out;
}

void apply_config_text(RunConfig& cfg, const std::string& text, const std::string& origin) {
    for (const auto& [k, v] : parse_key_values(text, origin)) {
        try {
            cfg.set(k, v);
        } catch (const UsageError& e) {
            throw ParseError(origin + ": " + e.what());
        }
    }
}

void apply_config_file(RunConfig& cfg, const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config file '" + path.string() + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    apply_config_text(cfg, ss.str(), path.string());
}

void apply_environment(RunConfig& cfg) {
    if (const char* s = std::getenv("MXT_SEED"); s && *s) cfg.seed = to_u64("MXT_SEED", s);
}

std::string format_config(const RunConfig& cfg) {
    std::string out;
    for (const auto& [k, v] : cfg.entries()) out += k + " = " + v + "\n";
    return out;
}

}  // namespace mxt
