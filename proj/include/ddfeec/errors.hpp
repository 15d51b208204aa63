#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace ddfeec {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class InvalidInput : public Error {
public:
    using Error::Error;
};

class OutOfDomain : public Error {
public:
    using Error::Error;
};

class AssemblyAccuracyError : public Error {
public:
    using Error::Error;
};

class StructureViolation : public Error {
public:
    using Error::Error;
};

class BackendFailure : public Error {
public:
    BackendFailure(int subdomain, const std::string& what)
        : Error("subdomain " + std::to_string(subdomain) + ": " + what), subdomain_(subdomain) {}
    int subdomain() const { return subdomain_; }

private:
    int subdomain_;
};

class ConvergenceFailure : public Error {
public:
    ConvergenceFailure(const std::string& what, std::vector<double> history)
        : Error(what), history_(std::move(history)) {}
    const std::vector<double>& history() const { return history_; }

private:
    std::vector<double> history_;
};

class UnisolvencyWarning : public Error {
public:
    UnisolvencyWarning(double sigma)
        : Error("stacked trace projection is rank deficient (smallest singular value " +
                std::to_string(sigma) + ")"),
          sigma_(sigma) {}
    double sigma() const { return sigma_; }

private:
    double sigma_;
};

class TrainingError : public Error {
public:
    using Error::Error;
};

}  // namespace ddfeec
