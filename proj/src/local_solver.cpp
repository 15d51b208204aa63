#include "ddfeec/local_solver.hpp"

#include "ddfeec/errors.hpp"

namespace ddfeec {

LocalField& LocalField::operator+=(const LocalField& o) {
    if (o.subdomain != subdomain || o.backend != backend || o.pressure.size() != pressure.size())
        throw InvalidInput("adding fields from different backends");
    pressure += o.pressure;
    flux += o.flux;
    loaded = loaded || o.loaded;
    return *this;
}

LocalField operator+(LocalField a, const LocalField& b) {
    a += b;
    return a;
}

LocalField operator*(double s, LocalField a) {
    a.pressure *= s;
    a.flux *= s;
    return a;
}

}  // namespace ddfeec
