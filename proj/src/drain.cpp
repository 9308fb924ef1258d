#include "mmdiag/drain.hpp"

#include <algorithm>
#include <functional>
#include <sstream>

#include "mmdiag/types.hpp"
#include "mmdiag/util.hpp"

namespace mmdiag {

namespace {

std::string join_tokens(const std::vector<std::string>& tokens) {
    std::string out;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        if (i) out += ' ';
        out += tokens[i];
    }
    return out;
}

// Fraction of positions with equal tokens. Lengths normally agree (length
// is the first routing level) but can differ once the root overflows into
// its wildcard child; such pairs never match.
double similarity(const std::vector<std::string>& a, const std::vector<std::string>& b) {
    if (a.size() != b.size()) return 0.0;
    std::size_t equal = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (a[i] == b[i]) ++equal;
    }
    return static_cast<double>(equal) / static_cast<double>(a.size());
}

}  // namespace

ParseTree::ParseTree(Params params) : params_(params), root_(std::make_unique<Node>()) {}

std::vector<std::string> ParseTree::tokenize(const std::string& message) {
    std::vector<std::string> tokens;
    std::istringstream stream(message);
    std::string tok;
    while (stream >> tok) tokens.push_back(tok);
    return tokens;
}

std::uint64_t ParseTree::template_id(const std::vector<std::string>& tokens) {
    std::uint64_t h = fnv1a64(join_tokens(tokens));
    if (h == kEmptyTemplateId) h = 0x9e3779b97f4a7c15ull;  // keep 0 reserved
    return h;
}

ParseTree::Node* ParseTree::route(const std::vector<std::string>& tokens, bool create) {
    Node* node = root_.get();
    auto descend = [&](const std::string& key) -> Node* {
        auto it = node->children.find(key);
        if (it != node->children.end()) return it->second.get();
        if (!create) {
            // Frozen path: fall through to the wildcard child when present.
            auto wc = node->children.find(kWildcard);
            return wc == node->children.end() ? nullptr : wc->second.get();
        }
        if (node->children.size() >= static_cast<std::size_t>(params_.max_children)) {
            auto [wc, _] = node->children.try_emplace(kWildcard, std::make_unique<Node>());
            return wc->second.get();
        }
        auto [child, _] = node->children.try_emplace(key, std::make_unique<Node>());
        return child->second.get();
    };

    node = descend(std::to_string(tokens.size()));
    if (!node) return nullptr;
    const std::size_t levels = std::min<std::size_t>(tokens.size(), params_.depth);
    for (std::size_t i = 0; i < levels; ++i) {
        const std::string key = contains_digit(tokens[i]) ? kWildcard : tokens[i];
        node = descend(key);
        if (!node) return nullptr;
    }
    return node;
}

const ParseTree::Node* ParseTree::route_const(const std::vector<std::string>& tokens) const {
    return const_cast<ParseTree*>(this)->route(tokens, /*create=*/false);
}

std::uint64_t ParseTree::parse(const std::string& message) {
    auto tokens = tokenize(message);
    if (tokens.empty()) return kEmptyTemplateId;
    Node* leaf = route(tokens, /*create=*/true);

    double best_sim = -1.0;
    std::vector<std::string>* best = nullptr;
    for (auto& tmpl : leaf->templates) {
        const double sim = similarity(tokens, tmpl);
        if (sim > best_sim) {
            best_sim = sim;
            best = &tmpl;
        }
    }
    if (best && best_sim >= params_.sim_threshold) {
        for (std::size_t i = 0; i < best->size(); ++i) {
            if ((*best)[i] != tokens[i]) (*best)[i] = kWildcard;
        }
        return template_id(*best);
    }
    leaf->templates.push_back(tokens);
    return template_id(tokens);
}

std::optional<std::uint64_t> ParseTree::lookup(const std::string& message) const {
    auto tokens = tokenize(message);
    if (tokens.empty()) return kEmptyTemplateId;
    const Node* leaf = route_const(tokens);
    if (!leaf || leaf->templates.empty()) return std::nullopt;

    double best_sim = -1.0;
    const std::vector<std::string>* best = nullptr;
    for (const auto& tmpl : leaf->templates) {
        const double sim = similarity(tokens, tmpl);
        if (sim > best_sim) {
            best_sim = sim;
            best = &tmpl;
        }
    }
    return template_id(*best);
}

std::uint64_t ParseTree::lookup_or_zero(const std::string& message) const {
    return lookup(message).value_or(kEmptyTemplateId);
}

std::size_t ParseTree::template_count() const {
    std::vector<std::string> all;
    collect(*root_, all);
    return all.size();
}

std::vector<std::string> ParseTree::templates() const {
    std::vector<std::string> all;
    collect(*root_, all);
    std::sort(all.begin(), all.end());
    return all;
}

void ParseTree::collect(const Node& node, std::vector<std::string>& out) const {
    for (const auto& tmpl : node.templates) out.push_back(join_tokens(tmpl));
    for (const auto& [_, child] : node.children) collect(*child, out);
}

nlohmann::json ParseTree::to_json() const {
    // Recursive lambda over the private Node type.
    std::function<nlohmann::json(const Node&)> dump = [&](const Node& node) {
        nlohmann::json j;
        j["templates"] = node.templates;
        nlohmann::json children = nlohmann::json::object();
        for (const auto& [key, child] : node.children) children[key] = dump(*child);
        j["children"] = std::move(children);
        return j;
    };
    nlohmann::json j;
    j["version"] = 1;
    j["depth"] = params_.depth;
    j["sim_threshold"] = params_.sim_threshold;
    j["max_children"] = params_.max_children;
    j["root"] = dump(*root_);
    return j;
}

ParseTree ParseTree::from_json(const nlohmann::json& j) {
    if (j.value("version", 0) != 1) {
        throw DataError("parse tree file: unsupported version " +
                        std::to_string(j.value("version", 0)));
    }
    Params p;
    p.depth = j.at("depth").get<int>();
    p.sim_threshold = j.at("sim_threshold").get<double>();
    p.max_children = j.at("max_children").get<int>();
    ParseTree tree(p);
    std::function<void(Node&, const nlohmann::json&)> fill = [&](Node& node,
                                                                 const nlohmann::json& jn) {
        node.templates = jn.at("templates").get<std::vector<std::vector<std::string>>>();
        for (const auto& [key, child] : jn.at("children").items()) {
            auto owned = std::make_unique<Node>();
            fill(*owned, child);
            node.children.emplace(key, std::move(owned));
        }
    };
    fill(*tree.root_, j.at("root"));
    return tree;
}

}  // namespace mmdiag
