#include "dqms/problem_io.hpp"

#include <fstream>
#include <sstream>

#include "json.hpp"

namespace dqms {

namespace {

using nlohmann::json;

json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open " + path);
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ValidationError(path + ": " + e.what());
  }
}

dmat parse_real_matrix(const json& j, const std::string& field) {
  if (!j.is_array() || j.empty() || !j[0].is_array())
    throw ValidationError(field + ": expected a 2D array");
  const size_t rows = j.size();
  const size_t cols = j[0].size();
  dmat out(rows, cols);
  for (size_t r = 0; r < rows; ++r) {
    if (!j[r].is_array() || j[r].size() != cols)
      throw ValidationError(field + ": ragged rows");
    for (size_t c = 0; c < cols; ++c) {
      if (!j[r][c].is_number())
        throw ValidationError(field + ": non-numeric entry at row " + std::to_string(r));
      out(r, c) = j[r][c].get<real>();
    }
  }
  return out;
}

imat parse_int_matrix(const json& j, const std::string& field) {
  dmat raw = parse_real_matrix(j, field);
  imat out(raw.rows(), raw.cols());
  for (index_t r = 0; r < raw.rows(); ++r)
    for (index_t c = 0; c < raw.cols(); ++c) {
      real v = raw(r, c);
      if (v != std::floor(v)) throw ValidationError(field + ": non-integer entry");
      out(r, c) = static_cast<int>(v);
    }
  return out;
}

cmat parse_complex_matrix(const json& j, const std::string& field) {
  if (!j.is_object() || !j.contains("re"))
    throw ValidationError(field + ": expected an object with \"re\" (and optional \"im\")");
  dmat re = parse_real_matrix(j["re"], field + ".re");
  cmat out = re.cast<cplx>();
  if (j.contains("im")) {
    dmat im = parse_real_matrix(j["im"], field + ".im");
    if (im.rows() != re.rows() || im.cols() != re.cols())
      throw ValidationError(field + ": \"re\" and \"im\" shapes differ");
    out += cplx(0.0, 1.0) * im.cast<cplx>();
  }
  return out;
}

std::vector<cmat> parse_povm_elements(const json& j, const std::string& field, index_t dim) {
  if (!j.is_array() || j.empty())
    throw ValidationError(field + ": expected a non-empty array of matrices");
  std::vector<cmat> out;
  for (size_t k = 0; k < j.size(); ++k) {
    cmat el = parse_complex_matrix(j[k], field + "[" + std::to_string(k) + "]");
    if (el.rows() != dim || el.cols() != dim)
      throw ValidationError(field + "[" + std::to_string(k) + "]: expected " +
                            std::to_string(dim) + "x" + std::to_string(dim));
    out.push_back(std::move(el));
  }
  return out;
}

std::vector<std::vector<int>> parse_family(const json& j, const std::string& field,
                                           int alphabet) {
  if (!j.is_array() || j.empty())
    throw ValidationError(field + ": expected a non-empty array of index lists");
  std::vector<std::vector<int>> out;
  for (size_t k = 0; k < j.size(); ++k) {
    if (!j[k].is_array())
      throw ValidationError(field + "[" + std::to_string(k) + "]: expected an index list");
    std::vector<int> set;
    for (const auto& e : j[k]) {
      if (!e.is_number_integer())
        throw ValidationError(field + "[" + std::to_string(k) + "]: non-integer index");
      int v = e.get<int>();
      if (v < 0 || v >= alphabet)
        throw ValidationError(field + "[" + std::to_string(k) + "]: index " +
                              std::to_string(v) + " outside 0.." + std::to_string(alphabet - 1));
      set.push_back(v);
    }
    out.push_back(std::move(set));
  }
  return out;
}

int require_positive_int(const json& j, const std::string& field) {
  if (!j.contains(field) || !j[field].is_number_integer() || j[field].get<int>() < 1)
    throw ValidationError(field + ": expected a positive integer");
  return j[field].get<int>();
}

}  // namespace

ProblemFile load_problem(const std::string& path) {
  json j = read_json(path);
  if (!j.is_object()) throw ValidationError(path + ": expected a JSON object");

  ProblemFile out;
  const int dim_a = require_positive_int(j, "dim_a");
  const int dim_b = require_positive_int(j, "dim_b");

  if (!j.contains("state")) throw ValidationError("state: missing");
  cmat state = parse_complex_matrix(j["state"], "state");
  if (state.rows() != dim_a * dim_b)
    throw ValidationError("state: expected " + std::to_string(dim_a * dim_b) + "x" +
                          std::to_string(dim_a * dim_b) + " for dim_a*dim_b");
  try {
    out.rho = DensityOperator::checked(state, {dim_a, dim_b});
  } catch (const ValidationError& e) {
    throw ValidationError("state: " + std::string(e.what()));
  }

  if (!j.contains("povm_a")) throw ValidationError("povm_a: missing");
  if (!j.contains("povm_b")) throw ValidationError("povm_b: missing");
  try {
    out.povm_a = Povm::checked(parse_povm_elements(j["povm_a"], "povm_a", dim_a));
  } catch (const ValidationError& e) {
    std::string what = e.what();
    throw ValidationError(what.rfind("povm_a", 0) == 0 ? what : "povm_a: " + what);
  }
  try {
    out.povm_b = Povm::checked(parse_povm_elements(j["povm_b"], "povm_b", dim_b));
  } catch (const ValidationError& e) {
    std::string what = e.what();
    throw ValidationError(what.rfind("povm_b", 0) == 0 ? what : "povm_b: " + what);
  }

  if (!j.contains("g")) throw ValidationError("g: missing");
  imat g = parse_int_matrix(j["g"], "g");
  if (g.rows() != static_cast<index_t>(out.povm_a.elements.size()) ||
      g.cols() != static_cast<index_t>(out.povm_b.elements.size()))
    throw ValidationError("g: expected " + std::to_string(out.povm_a.elements.size()) + "x" +
                          std::to_string(out.povm_b.elements.size()) +
                          " to match the measurement outcomes");
  try {
    out.table = FunctionTable::checked(g);
  } catch (const ValidationError& e) {
    throw ValidationError("g: " + std::string(e.what()));
  }

  if (j.contains("family_a"))
    out.family_a =
        parse_family(j["family_a"], "family_a", static_cast<int>(out.povm_a.elements.size()));
  if (j.contains("family_b"))
    out.family_b =
        parse_family(j["family_b"], "family_b", static_cast<int>(out.povm_b.elements.size()));
  if (j.contains("channel_a")) out.channel_a = parse_real_matrix(j["channel_a"], "channel_a");
  if (j.contains("channel_b")) out.channel_b = parse_real_matrix(j["channel_b"], "channel_b");
  if (j.contains("description") && j["description"].is_string())
    out.description = j["description"].get<std::string>();
  return out;
}

dmat load_channel_matrix(const std::string& path) {
  json j = read_json(path);
  if (j.is_object() && j.contains("p")) return parse_real_matrix(j["p"], path + ": p");
  return parse_real_matrix(j, path);
}

}  // namespace dqms
