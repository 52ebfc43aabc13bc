#ifndef RDG_TESTS_DOCTEST_HPP
#define RDG_TESTS_DOCTEST_HPP

// torch's logging helpers define CHECK-style short names; doctest's win here.
// Include this header after all project/torch headers.
#ifdef CHECK
#undef CHECK
#endif
#ifdef CHECK_EQ
#undef CHECK_EQ
#endif
#ifdef CHECK_NE
#undef CHECK_NE
#endif
#ifdef CHECK_LE
#undef CHECK_LE
#endif
#ifdef CHECK_LT
#undef CHECK_LT
#endif
#ifdef CHECK_GE
#undef CHECK_GE
#endif
#ifdef CHECK_GT
#undef CHECK_GT
#endif
#include <doctest.h>

#endif
