#include <gtest/gtest.h>

#include "vtrace/config.hpp"
#include "vtrace/gradcheck.hpp"
#include "vtrace/io.hpp"
#include "vtrace/vtrace.hpp"

TEST(Smoke, Compiles) { SUCCEED(); }
