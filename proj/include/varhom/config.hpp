// Experiment configuration read from TOML. Every accessor reports the dotted
// field name in its ValidationError so command-line users see what to fix.
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <toml.hpp>

#include "varhom/dirichlet.hpp"
#include "varhom/integrand.hpp"

namespace varhom {

class ExperimentConfig {
public:
    static ExperimentConfig load(const std::filesystem::path& path) {
        if (!std::filesystem::exists(path)) throw ValidationError("config file not found: " + path.string());
        try {
            return ExperimentConfig(toml::parse_file(path.string()));
        } catch (const toml::parse_error& e) {
            throw ValidationError("config parse error in " + path.string() + ": " + std::string(e.description()));
        }
    }
    static ExperimentConfig parse(std::string_view text) {
        try {
            return ExperimentConfig(toml::parse(text));
        } catch (const toml::parse_error& e) {
            throw ValidationError("config parse error: " + std::string(e.description()));
        }
    }

    bool has(const std::string& key) const { return static_cast<bool>(tbl_.at_path(key)); }

    double number(const std::string& key) const {
        auto n = tbl_.at_path(key);
        require(static_cast<bool>(n), "config: missing field '" + key + "'");
        auto v = n.value<double>();
        require(v.has_value() && (n.is_floating_point() || n.is_integer()), "config: field '" + key + "' must be a number");
        require(std::isfinite(*v), "config: field '" + key + "' must be finite");
        return *v;
    }
    double number(const std::string& key, double fallback) const { return has(key) ? number(key) : fallback; }

    std::int64_t integer(const std::string& key) const {
        auto n = tbl_.at_path(key);
        require(static_cast<bool>(n), "config: missing field '" + key + "'");
        require(n.is_integer(), "config: field '" + key + "' must be an integer");
        return *n.value<std::int64_t>();
    }
    std::int64_t integer(const std::string& key, std::int64_t fallback) const {
        return has(key) ? integer(key) : fallback;
    }

    bool boolean(const std::string& key, bool fallback) const {
        if (!has(key)) return fallback;
        auto n = tbl_.at_path(key);
        require(n.is_boolean(), "config: field '" + key + "' must be a boolean");
        return *n.value<bool>();
    }

    std::string string(const std::string& key) const {
        auto n = tbl_.at_path(key);
        require(static_cast<bool>(n), "config: missing field '" + key + "'");
        require(n.is_string(), "config: field '" + key + "' must be a string");
        return *n.value<std::string>();
    }
    std::string string(const std::string& key, const std::string& fallback) const {
        return has(key) ? string(key) : fallback;
    }

    std::vector<double> numbers(const std::string& key) const {
        auto n = tbl_.at_path(key);
        require(static_cast<bool>(n), "config: missing field '" + key + "'");
        const auto* arr = n.as_array();
        require(arr != nullptr, "config: field '" + key + "' must be an array of numbers");
        std::vector<double> out;
        for (const auto& e : *arr) {
            auto v = e.value<double>();
            require(v.has_value() && std::isfinite(*v), "config: field '" + key + "' must contain finite numbers");
            out.push_back(*v);
        }
        return out;
    }
    std::vector<double> numbers(const std::string& key, std::vector<double> fallback) const {
        return has(key) ? numbers(key) : std::move(fallback);
    }

    /// Array of arrays (e.g. sample points or slopes).
    std::vector<std::vector<double>> points(const std::string& key) const {
        auto n = tbl_.at_path(key);
        require(static_cast<bool>(n), "config: missing field '" + key + "'");
        const auto* arr = n.as_array();
        require(arr != nullptr, "config: field '" + key + "' must be an array of arrays");
        std::vector<std::vector<double>> out;
        for (const auto& row : *arr) {
            const auto* r = row.as_array();
            require(r != nullptr, "config: field '" + key + "' must be an array of arrays");
            std::vector<double> p;
            for (const auto& e : *r) {
                auto v = e.value<double>();
                require(v.has_value() && std::isfinite(*v), "config: field '" + key + "' must contain finite numbers");
                p.push_back(*v);
            }
            out.push_back(std::move(p));
        }
        return out;
    }

    /// Strictly monotone schedule; the message names the field.
    std::vector<double> schedule(const std::string& key, bool decreasing) const {
        auto s = numbers(key);
        require(!s.empty(), "config: field '" + key + "' must be nonempty");
        for (double v : s) require(v > 0.0, "config: field '" + key + "' must contain positive values");
        for (std::size_t i = 1; i < s.size(); ++i) {
            const bool ok = decreasing ? s[i] < s[i - 1] : s[i] > s[i - 1];
            require(ok, "config: field '" + key + "' must be strictly " +
                            (decreasing ? "decreasing" : "increasing"));
        }
        return s;
    }
    std::vector<double> schedule(const std::string& key, bool decreasing, std::vector<double> fallback) const {
        return has(key) ? schedule(key, decreasing) : std::move(fallback);
    }

    std::string operation() const { return string("operation", ""); }

    /// Seed from the command line (if given) or the config; mandatory when
    /// `needed` is true.
    std::uint64_t seed(std::optional<std::uint64_t> cli, bool needed) const {
        if (cli) return *cli;
        if (has("seed")) {
            const auto s = integer("seed");
            require(s >= 0, "config: field 'seed' must be >= 0");
            return static_cast<std::uint64_t>(s);
        }
        require(!needed, "config: field 'seed' is required for this randomized operation (or pass --seed)");
        return 0;
    }

    Integrand integrand() const {
        const std::string name = string("integrand.name");
        ParamRecord params;
        if (auto n = tbl_.at_path("integrand.params"); n) {
            const auto* t = n.as_table();
            require(t != nullptr, "config: field 'integrand.params' must be a table");
            for (const auto& [k, v] : *t) {
                const std::string key(k.str());
                if (v.is_array()) params.tables[key] = numbers("integrand.params." + key);
                else params.scalars[key] = number("integrand.params." + key);
            }
        }
        try {
            return make_builtin(name, params);
        } catch (const ValidationError& e) {
            throw ValidationError(std::string("config: integrand: ") + e.what());
        }
    }

    /// family.kind: constant (default), rescaled, or perturbed (rescaled plus
    /// eps^-1/2 on B_eps(0) plus the constant family.h).
    IntegrandFamily family() const {
        const auto L = integrand();
        const std::string kind = string("family.kind", "constant");
        if (kind == "constant") return constant_family(L);
        if (kind == "rescaled") return rescaled_family(L);
        if (kind == "perturbed") {
            const double h = number("family.h", 0.0);
            require(h >= 0.0, "config: field 'family.h' must be >= 0");
            auto fam = inverse_sqrt_bump([h](std::span<const double>) { return h; });
            return [L, fam](double eps) { return perturbed_family(L.rescaled(eps), fam)(eps); };
        }
        throw ValidationError("config: field 'family.kind' must be one of constant, rescaled, perturbed");
    }
    bool constant_family_selected() const { return string("family.kind", "constant") == "constant"; }

    SolverConfig solver(std::uint64_t seed) const {
        SolverConfig s;
        s.max_iterations = static_cast<int>(integer("solver.max_iterations", s.max_iterations));
        s.gradient_tolerance = number("solver.gradient_tolerance", s.gradient_tolerance);
        s.lbfgs_memory = static_cast<int>(integer("solver.lbfgs_memory", s.lbfgs_memory));
        s.armijo_c1 = number("solver.armijo_c1", s.armijo_c1);
        s.backtrack = number("solver.backtrack", s.backtrack);
        s.multistart_count = static_cast<int>(integer("solver.multistart", s.multistart_count));
        s.refinement_levels = static_cast<int>(integer("solver.refinement_levels", s.refinement_levels));
        s.stagnation = number("solver.stagnation", s.stagnation);
        s.random_amplitude = number("solver.random_amplitude", s.random_amplitude);
        s.value_tolerance = number("solver.value_tolerance", s.value_tolerance);
        const std::string q = string("solver.quadrature", "auto");
        if (q == "auto") s.quadrature = QuadratureChoice::Auto;
        else if (q == "gauss2") s.quadrature = QuadratureChoice::Gauss2;
        else if (q == "midpoint") s.quadrature = QuadratureChoice::Midpoint;
        else throw ValidationError("config: field 'solver.quadrature' must be auto, gauss2 or midpoint");
        s.rng_seed = seed;
        try {
            s.validate();
        } catch (const ValidationError& e) {
            throw ValidationError(std::string("config: ") + e.what());
        }
        return s;
    }
    /// Random starts (even ids >= 2) need a seed.
    bool solver_randomized() const { return integer("solver.multistart", 1) >= 3; }

    const toml::table& table() const { return tbl_; }

private:
    explicit ExperimentConfig(toml::table t) : tbl_(std::move(t)) {}
    toml::table tbl_;
};

}  // namespace varhom
