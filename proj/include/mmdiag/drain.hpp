#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

namespace mmdiag {

// Fixed-depth prefix tree for online log template mining. Messages are
// routed by token count and then by their first `depth` tokens (tokens
// containing a digit route through the wildcard "<*>"); the leaf keeps the
// template list. A template's id is the stable 64-bit hash of its string
// form; id 0 is reserved for empty messages.
class ParseTree {
public:
    struct Params {
        int depth = 4;
        double sim_threshold = 0.4;
        int max_children = 100;
    };

    static constexpr const char* kWildcard = "<*>";
    static constexpr std::uint64_t kEmptyTemplateId = 0;

    explicit ParseTree(Params params = {});
    ParseTree(ParseTree&&) noexcept = default;
    ParseTree& operator=(ParseTree&&) noexcept = default;

    // Online fit-and-match: routes the message, merges it into the best
    // template at the leaf (masking differing positions) or stores it as a
    // new template, and returns the template id after the merge.
    std::uint64_t parse(const std::string& message);

    // Frozen match: never creates or mutates templates. Returns the best
    // stored template's id (preferring matches above the similarity
    // threshold), or nullopt when the routed leaf holds nothing.
    std::optional<std::uint64_t> lookup(const std::string& message) const;

    // lookup() with the empty-message and miss conventions applied: empty
    // messages give the reserved id 0, and a miss falls back to 0.
    std::uint64_t lookup_or_zero(const std::string& message) const;

    std::size_t template_count() const;
    std::vector<std::string> templates() const;  // rendered template strings, sorted
    const Params& params() const { return params_; }

    nlohmann::json to_json() const;
    static ParseTree from_json(const nlohmann::json& j);

    static std::vector<std::string> tokenize(const std::string& message);
    static std::uint64_t template_id(const std::vector<std::string>& tokens);

private:
    struct Node {
        std::map<std::string, std::unique_ptr<Node>> children;
        std::vector<std::vector<std::string>> templates;  // leaves only
    };

    Node* route(const std::vector<std::string>& tokens, bool create);
    const Node* route_const(const std::vector<std::string>& tokens) const;
    void collect(const Node& node, std::vector<std::string>& out) const;

    Params params_;
    std::unique_ptr<Node> root_;
};

}  // namespace mmdiag
