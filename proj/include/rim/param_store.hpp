#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <deque>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "rim/tensor.hpp"

#include <nlohmann/json.hpp>

namespace rim {

// Named trainable tensors with stable iteration order plus per-parameter
// optimizer moments. Checkpoints are a one-line JSON manifest followed by raw
// little-endian float32 blobs in manifest order.
template <typename S>
class ParamStore {
public:
    struct Moments {
        std::vector<S> m, v;
    };

    Tensor<S>& create(const std::string& name, Shape shape, std::vector<S> values) {
        check(!index_.count(name), "duplicate parameter name: " + name);
        index_[name] = params_.size();
        params_.emplace_back(name, Tensor<S>::param(std::move(shape), std::move(values)));
        return params_.back().second;
    }

    Tensor<S>& create_zeros(const std::string& name, Shape shape) {
        std::vector<S> v(static_cast<size_t>(numel(shape)), S(0));
        return create(name, std::move(shape), std::move(v));
    }

    // Fan-in scaled normal init, the default for linear maps.
    Tensor<S>& create_normal(const std::string& name, Shape shape, std::mt19937_64& rng,
                             double stddev) {
        std::normal_distribution<double> dist(0.0, stddev);
        std::vector<S> v(static_cast<size_t>(numel(shape)));
        for (S& x : v) x = static_cast<S>(dist(rng));
        return create(name, std::move(shape), std::move(v));
    }

    bool contains(const std::string& name) const { return index_.count(name) != 0; }

    Tensor<S>& at(const std::string& name) {
        auto it = index_.find(name);
        check(it != index_.end(), "unknown parameter: " + name);
        return params_[it->second].second;
    }

    size_t count() const { return params_.size(); }

    std::int64_t total_elements() const {
        std::int64_t n = 0;
        for (const auto& [name, t] : params_) n += t.size();
        return n;
    }

    auto begin() { return params_.begin(); }
    auto end() { return params_.end(); }
    auto begin() const { return params_.begin(); }
    auto end() const { return params_.end(); }

    void zero_grad() {
        for (auto& [name, t] : params_)
            if (!t.grad().empty()) std::fill(t.grad().begin(), t.grad().end(), S(0));
    }

    Moments& moments(const std::string& name) {
        auto& mo = moments_[name];
        if (mo.m.empty()) {
            size_t n = at(name).values().size();
            mo.m.assign(n, S(0));
            mo.v.assign(n, S(0));
        }
        return mo;
    }

    // FNV-1a over the float32 image of all parameters, in order.
    std::uint64_t checksum() const {
        std::uint64_t h = 1469598103934665603ull;
        for (const auto& [name, t] : params_) {
            for (S x : t.values()) {
                float f = static_cast<float>(x);
                std::uint32_t bits;
                std::memcpy(&bits, &f, 4);
                for (int b = 0; b < 4; ++b) {
                    h ^= (bits >> (8 * b)) & 0xff;
                    h *= 1099511628211ull;
                }
            }
        }
        return h;
    }

    void save(const std::string& path) const {
        nlohmann::json manifest = nlohmann::json::array();
        for (const auto& [name, t] : params_)
            manifest.push_back({{"name", name}, {"shape", t.shape()}, {"dtype", "f32"}});
        std::ofstream out(path, std::ios::binary);
        check(out.good(), "cannot open checkpoint for writing: " + path);
        out << manifest.dump() << '\n';
        for (const auto& [name, t] : params_) {
            std::vector<float> buf(t.values().begin(), t.values().end());
            out.write(reinterpret_cast<const char*>(buf.data()),
                      static_cast<std::streamsize>(buf.size() * 4));
        }
        check(out.good(), "checkpoint write failed: " + path);
    }

    // Loads values into already-created parameters; names and shapes must match.
    void load(const std::string& path) {
        std::ifstream in(path, std::ios::binary);
        check(in.good(), "cannot open checkpoint: " + path);
        std::string line;
        std::getline(in, line);
        auto manifest = nlohmann::json::parse(line);
        for (const auto& entry : manifest) {
            const std::string name = entry.at("name");
            Shape shape = entry.at("shape").get<Shape>();
            Tensor<S>& t = at(name);
            check(t.shape() == shape, "checkpoint shape mismatch for " + name + ": " +
                                          shape_str(shape) + " vs " + shape_str(t.shape()));
            std::vector<float> buf(static_cast<size_t>(numel(shape)));
            in.read(reinterpret_cast<char*>(buf.data()),
                    static_cast<std::streamsize>(buf.size() * 4));
            check(in.good(), "checkpoint truncated at parameter " + name);
            for (size_t i = 0; i < buf.size(); ++i) t.values()[i] = static_cast<S>(buf[i]);
        }
    }

private:
    std::deque<std::pair<std::string, Tensor<S>>> params_;
    std::map<std::string, size_t> index_;
    std::map<std::string, Moments> moments_;
};

}  // namespace rim
