// SPDX-License-Identifier: MIT
#pragma once

#include <sstream>
#include <string>

#include "awdro/oracle.hpp"
#include "awdro/regression.hpp"

namespace awdro {

struct VerifyResult {
    bool pass = false;
    std::string text;
};

/// Closed-form regression table plus the randomized property suite, rendered
/// deterministically (independent of thread count).
inline VerifyResult run_verify(const oracle::PropertyOptions& opt = {}) {
    VerifyResult out;
    auto rows = reference_suite();
    bool rows_pass = true;
    for (const auto& r : rows) rows_pass &= r.pass;
    oracle::PropertyReport prop = oracle::property_suite(opt);
    std::ostringstream os;
    os << render_reference(rows);
    os << prop.render();
    out.pass = rows_pass && prop.pass();
    os << (out.pass ? "verify: PASS\n" : "verify: FAIL\n");
    out.text = os.str();
    return out;
}

}  // namespace awdro
