#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace chaosflow {

// Root of every failure this library raises on purpose.  Callers that want
// blanket handling catch this; everything more specific derives from it.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

class IntegrationDiverged : public Error {
public:
    std::size_t step;
    explicit IntegrationDiverged(std::size_t at)
        : Error("non-finite state produced by integrator at step " + std::to_string(at)),
          step(at) {}
};

class BadInputShape : public Error {
public:
    explicit BadInputShape(const std::string& msg) : Error(msg) {}
};

class BadObservation : public Error {
public:
    int index;
    BadObservation(int idx, int dim)
        : Error("observed index " + std::to_string(idx) + " out of range for dimension " +
                std::to_string(dim)),
          index(idx) {}
};

class InsufficientData : public Error {
public:
    std::size_t required;
    std::size_t available;
    InsufficientData(const std::string& what, std::size_t req, std::size_t avail)
        : Error(what + ": need " + std::to_string(req) + " samples, have " +
                std::to_string(avail)),
          required(req), available(avail) {}
};

class DivergedRollout : public Error {
public:
    std::size_t step;
    explicit DivergedRollout(std::size_t at)
        : Error("rollout produced a non-finite state at step " + std::to_string(at)),
          step(at) {}
};

class TrainingDiverged : public Error {
public:
    std::size_t epoch;
    std::size_t batch;
    TrainingDiverged(std::size_t e, std::size_t b)
        : Error("training loss became non-finite at epoch " + std::to_string(e) +
                ", batch " + std::to_string(b)),
          epoch(e), batch(b) {}
};

class ConstantSeries : public Error {
public:
    explicit ConstantSeries(const std::string& ctx)
        : Error(ctx + ": series is constant") {}
};

class DegenerateGeometry : public Error {
public:
    explicit DegenerateGeometry(const std::string& msg) : Error(msg) {}
};

class NoNeighborPairs : public Error {
public:
    explicit NoNeighborPairs(const std::string& msg) : Error(msg) {}
};

class IncomparableReports : public Error {
public:
    explicit IncomparableReports(const std::string& msg) : Error(msg) {}
};

// Malformed or corrupt on-disk artifact (bad magic, truncated payload, ...).
class FormatError : public Error {
public:
    explicit FormatError(const std::string& msg) : Error(msg) {}
};

class UpstreamMissing : public Error {
public:
    explicit UpstreamMissing(const std::string& msg) : Error(msg) {}
};

class FingerprintMismatch : public Error {
public:
    explicit FingerprintMismatch(const std::string& msg) : Error(msg) {}
};

class ConfigInvalid : public Error {
public:
    std::vector<std::string> violations;
    explicit ConfigInvalid(std::vector<std::string> v)
        : Error(join(v)), violations(std::move(v)) {}

private:
    static std::string join(const std::vector<std::string>& v) {
        std::string out = "invalid configuration:";
        for (const auto& s : v) out += "\n  - " + s;
        return out;
    }
};

} // namespace chaosflow
