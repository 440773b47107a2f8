#include "sfield/kvfile.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

namespace sfield {

KvFile KvFile::parse(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open file: " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_text(buffer.str(), path.string());
}

KvFile KvFile::parse_text(const std::string& text, const std::string& origin) {
  KvFile file;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    std::istringstream tokens(line);
    std::string key;
    if (!(tokens >> key)) continue;
    Entry entry;
    entry.key = key;
    std::string value;
    while (tokens >> value) entry.values.push_back(value);
    if (entry.values.empty())
      throw std::runtime_error(origin + ":" + std::to_string(lineno) + ": key '" + key +
                               "' has no value");
    file.entries.push_back(std::move(entry));
  }
  return file;
}

namespace {
const KvFile::Entry* find_entry(const std::vector<KvFile::Entry>& entries,
                                const std::string& key) {
  const KvFile::Entry* found = nullptr;
  for (const auto& e : entries)
    if (e.key == key) found = &e;  // last one wins
  return found;
}

double parse_double(const std::string& s, const std::string& key) {
  std::size_t pos = 0;
  double v;
  try {
    v = std::stod(s, &pos);
  } catch (const std::exception&) {
    throw std::runtime_error("key '" + key + "': cannot parse '" + s + "' as a number");
  }
  if (pos != s.size())
    throw std::runtime_error("key '" + key + "': cannot parse '" + s + "' as a number");
  return v;
}
}  // namespace

bool KvFile::has(const std::string& key) const { return find_entry(entries, key) != nullptr; }

std::string KvFile::get_string(const std::string& key) const {
  const Entry* e = find_entry(entries, key);
  if (!e) throw std::runtime_error("missing required key '" + key + "'");
  if (e->values.size() != 1)
    throw std::runtime_error("key '" + key + "': expected a single value");
  return e->values[0];
}

std::string KvFile::get_string(const std::string& key, const std::string& fallback) const {
  return has(key) ? get_string(key) : fallback;
}

double KvFile::get_double(const std::string& key) const {
  return parse_double(get_string(key), key);
}

double KvFile::get_double(const std::string& key, double fallback) const {
  return has(key) ? get_double(key) : fallback;
}

long KvFile::get_int(const std::string& key) const {
  const double v = get_double(key);
  const long n = static_cast<long>(v);
  if (static_cast<double>(n) != v)
    throw std::runtime_error("key '" + key + "': expected an integer");
  return n;
}

long KvFile::get_int(const std::string& key, long fallback) const {
  return has(key) ? get_int(key) : fallback;
}

bool KvFile::get_bool(const std::string& key, bool fallback) const {
  if (!has(key)) return fallback;
  const std::string v = get_string(key);
  if (v == "true" || v == "1" || v == "on") return true;
  if (v == "false" || v == "0" || v == "off") return false;
  throw std::runtime_error("key '" + key + "': expected a boolean, got '" + v + "'");
}

std::vector<double> KvFile::get_doubles(const std::string& key) const {
  const Entry* e = find_entry(entries, key);
  if (!e) throw std::runtime_error("missing required key '" + key + "'");
  std::vector<double> out;
  out.reserve(e->values.size());
  for (const auto& v : e->values) out.push_back(parse_double(v, key));
  return out;
}

std::vector<const KvFile::Entry*> KvFile::all(const std::string& key) const {
  std::vector<const Entry*> out;
  for (const auto& e : entries)
    if (e.key == key) out.push_back(&e);
  return out;
}

}  // namespace sfield
