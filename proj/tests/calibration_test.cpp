#include <doctest.h>
TEST_SUITE("calibration") {}
