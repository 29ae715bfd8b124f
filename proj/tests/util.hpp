#pragma once
#include <string>

#include "manipdt/jsonio.hpp"
#include "manipdt/pddl.hpp"

namespace testutil {

inline std::string src_path(const std::string& rel) {
  return std::string(MANIPDT_SOURCE_DIR) + "/" + rel;
}

inline std::string bin_path(const std::string& rel) {
  return std::string(MANIPDT_BINARY_DIR) + "/" + rel;
}

inline std::string read_task(const std::string& name) {
  return jsonio::read_file(src_path("tasks/" + name));
}

inline pddl::GroundTask load_task(const std::string& domain_file, const std::string& problem_file) {
  pddl::Domain d = pddl::parse_domain(read_task(domain_file));
  pddl::Problem p = pddl::parse_problem(read_task(problem_file), d);
  return pddl::ground(d, p);
}

}  // namespace testutil
