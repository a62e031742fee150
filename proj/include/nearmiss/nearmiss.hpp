#pragma once

// Everything except the LLM backend, which needs cpp-httplib: include nearmiss/llm_backend.hpp for that.

#include "nearmiss/error.hpp"
#include "nearmiss/value.hpp"
#include "nearmiss/trace.hpp"
#include "nearmiss/expr.hpp"
#include "nearmiss/eval.hpp"
#include "nearmiss/guard_spec.hpp"
#include "nearmiss/resolver.hpp"
#include "nearmiss/detector.hpp"
#include "nearmiss/metrics.hpp"
#include "nearmiss/airline_fixture.hpp"
#include "nearmiss/synth.hpp"
