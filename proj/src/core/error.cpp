#include "dr2s/core/error.hpp"

namespace dr2s {

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e)) return 2;
  if (dynamic_cast<const DataError*>(&e)) return 3;
  if (dynamic_cast<const NumericError*>(&e)) return 4;
  return 1;
}

void rethrow_tagged(const std::string& tag) {
  auto t = [&](const std::exception& e) { return tag + ": " + e.what(); };
  try {
    throw;
  } catch (const IntegrityError& e) {
    throw IntegrityError(t(e));
  } catch (const IoError& e) {
    throw IoError(t(e));
  } catch (const SizeError& e) {
    throw SizeError(t(e));
  } catch (const BoundsError& e) {
    throw BoundsError(t(e));
  } catch (const DataError& e) {
    throw DataError(t(e));
  } catch (const UndefinedCorrelation& e) {
    throw UndefinedCorrelation(t(e));
  } catch (const NumericError& e) {
    throw NumericError(t(e));
  } catch (const ConfigError& e) {
    throw ConfigError(t(e));
  } catch (const Error& e) {
    throw Error(t(e));
  }
}

}  // namespace dr2s
