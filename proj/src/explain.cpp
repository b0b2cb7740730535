#include "lmm/explain.hpp"

namespace lmm {

Method parse_method(const std::string& name) {
    if (name == "fragility") return Method::fragility;
    if (name == "intgrad") return Method::intgrad;
    if (name == "shapley") return Method::shapley;
    throw ParameterError("unknown explanation method '" + name + "' (expected fragility, intgrad or shapley)");
}

std::string to_string(Method method) {
    switch (method) {
        case Method::fragility: return "fragility";
        case Method::intgrad: return "intgrad";
        case Method::shapley: return "shapley";
    }
    return "unknown";
}

}  // namespace lmm
