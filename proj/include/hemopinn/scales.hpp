#pragma once

#include "hemopinn/errors.hpp"

namespace hemopinn::pinn {

// Characteristic scales. Every quantity entering the PINN is divided by its
// scale; the only physical constant left in the momentum residual is Re.
// Flow, resistance and compliance use the 2D (per unit depth) variants so
// that resistance * flow = pressure and resistance * compliance = time.
struct Scales {
    double L = 1.0;   // cm
    double U = 1.0;   // cm/s
    double rho = 1.06; // g/cm^3
    double mu = 0.035; // P

    void validate() const {
        if (!(L > 0.0) || !(U > 0.0) || !(rho > 0.0) || !(mu > 0.0))
            throw Error("Scales: L, U, rho, mu must be positive");
    }

    double time() const { return L / U; }
    double pressure() const { return rho * U * U; }
    double reynolds() const { return rho * U * L / mu; }
    double flow() const { return U * L; }                    // cm^2/s per unit depth
    double resistance() const { return rho * U / L; }        // dyn s cm^-4
    double compliance() const { return L * L / (rho * U * U); } // cm^4/dyn
};

} // namespace hemopinn::pinn
