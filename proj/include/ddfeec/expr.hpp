#pragma once

#include <memory>
#include <string>

namespace ddfeec {

// Arithmetic over x and y.
//   numbers, x, y, pi, e
//   + - * / ^ (right associative), unary minus
//   < <= > >= == (yield 1 or 0)
//   sin cos tan exp log sqrt abs floor atan2(a,b) min(a,b) max(a,b) pow(a,b) if(c,a,b)
class Expression {
public:
    Expression();
    static Expression parse(const std::string& text);
    static Expression constant(double v);

    double operator()(double x, double y) const;
    const std::string& source() const { return source_; }

    struct Node;

private:
    std::shared_ptr<const Node> root_;
    std::string source_;
};

}  // namespace ddfeec
