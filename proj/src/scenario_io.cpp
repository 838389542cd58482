#include "isacxt/scenario_io.hpp"

#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace isacxt::scenario_io {

using nlohmann::json;

namespace {

void require_keys(const json& obj, const std::string& path,
                  const std::set<std::string>& allowed) {
  if (!obj.is_object()) throw std::invalid_argument("scenario: " + path + " must be an object");
  for (auto it = obj.begin(); it != obj.end(); ++it)
    if (!allowed.count(it.key()))
      throw std::invalid_argument("scenario: unknown key '" + path + "." + it.key() + "'");
}

double get_num(const json& obj, const std::string& key, const std::string& path) {
  if (!obj.contains(key))
    throw std::invalid_argument("scenario: missing key '" + path + "." + key + "'");
  if (!obj[key].is_number())
    throw std::invalid_argument("scenario: '" + path + "." + key + "' must be a number");
  return obj[key].get<double>();
}

double get_num_or(const json& obj, const std::string& key, double fallback) {
  return obj.contains(key) ? obj[key].get<double>() : fallback;
}

int get_int(const json& obj, const std::string& key, const std::string& path) {
  const double v = get_num(obj, key, path);
  return static_cast<int>(v);
}

}  // namespace

Scenario parse_scenario(const std::string& json_text) {
  json doc = json::parse(json_text);
  require_keys(doc, "",
               {"array", "target", "rcs", "users", "power", "noise", "sidelobe", "seed"});

  Scenario sc;

  const json& arr = doc.at("array");
  require_keys(arr, "array",
               {"n_tx_x", "n_tx_y", "n_rx_x", "n_rx_y", "carrier_hz", "subcarrier_spacing_hz",
                "n_subcarriers", "n_symbols", "narrowband"});
  sc.geom.n_tx_x = get_int(arr, "n_tx_x", "array");
  sc.geom.n_tx_y = get_int(arr, "n_tx_y", "array");
  sc.geom.n_rx_x = get_int(arr, "n_rx_x", "array");
  sc.geom.n_rx_y = get_int(arr, "n_rx_y", "array");
  sc.geom.carrier_hz = get_num(arr, "carrier_hz", "array");
  sc.geom.subcarrier_spacing_hz = get_num(arr, "subcarrier_spacing_hz", "array");
  sc.geom.n_subcarriers = get_int(arr, "n_subcarriers", "array");
  sc.geom.n_symbols = get_int(arr, "n_symbols", "array");
  if (arr.contains("narrowband")) sc.geom.narrowband = arr["narrowband"].get<bool>();

  const json& tgt = doc.at("target");
  require_keys(tgt, "target",
               {"theta0_deg", "delta_theta_deg", "phi0_deg", "delta_phi_deg", "d0_m", "delta_d_m",
                "grid"});
  sc.target.theta0 = deg_to_rad(get_num(tgt, "theta0_deg", "target"));
  sc.target.delta_theta = deg_to_rad(get_num(tgt, "delta_theta_deg", "target"));
  sc.target.phi0 = deg_to_rad(get_num(tgt, "phi0_deg", "target"));
  sc.target.delta_phi = deg_to_rad(get_num(tgt, "delta_phi_deg", "target"));
  sc.target.d0 = get_num(tgt, "d0_m", "target");
  sc.target.delta_d = get_num(tgt, "delta_d_m", "target");
  if (tgt.contains("grid")) {
    const json& grid = tgt["grid"];
    require_keys(grid, "target.grid", {"policy", "t_theta", "t_phi", "t_d"});
    const std::string policy = grid.at("policy").get<std::string>();
    if (policy == "explicit") {
      sc.grid_policy.explicit_sizes = true;
      sc.grid_policy.t_theta = get_int(grid, "t_theta", "target.grid");
      sc.grid_policy.t_phi = get_int(grid, "t_phi", "target.grid");
      sc.grid_policy.t_d = get_int(grid, "t_d", "target.grid");
    } else if (policy == "auto") {
      sc.grid_policy.explicit_sizes = false;
    } else {
      throw std::invalid_argument("scenario: target.grid.policy must be 'auto' or 'explicit'");
    }
  }

  const json& users = doc.at("users");
  require_keys(users, "users",
               {"count", "sinr_target_db", "distance_m", "path_loss_exponent", "rician_factor",
                "pure_los", "sector"});
  sc.users.count = get_int(users, "count", "users");
  sc.users.distance_m = get_num_or(users, "distance_m", 50.0);
  sc.users.path_loss_exponent = get_num_or(users, "path_loss_exponent", 3.0);
  sc.users.rician_factor = get_num_or(users, "rician_factor", 10.0);
  if (users.contains("pure_los")) sc.users.pure_los = users["pure_los"].get<bool>();
  if (users.contains("sector")) {
    const json& sect = users["sector"];
    require_keys(sect, "users.sector",
                 {"theta_min_deg", "theta_max_deg", "phi_min_deg", "phi_max_deg"});
    sc.users.sector_theta_min = deg_to_rad(get_num(sect, "theta_min_deg", "users.sector"));
    sc.users.sector_theta_max = deg_to_rad(get_num(sect, "theta_max_deg", "users.sector"));
    sc.users.sector_phi_min = deg_to_rad(get_num(sect, "phi_min_deg", "users.sector"));
    sc.users.sector_phi_max = deg_to_rad(get_num(sect, "phi_max_deg", "users.sector"));
  }

  const json& power = doc.at("power");
  require_keys(power, "power", {"total"});
  sc.total_power = get_num(power, "total", "power");

  const json& noise = doc.at("noise");
  require_keys(noise, "noise", {"comm", "sensing"});
  sc.noise_comm = get_num(noise, "comm", "noise");
  sc.noise_sensing = get_num(noise, "sensing", "noise");

  if (doc.contains("sidelobe")) {
    const json& side = doc["sidelobe"];
    require_keys(side, "sidelobe", {"epsilon", "points_per_side", "spacing_cells"});
    sc.sidelobe.epsilon = get_num(side, "epsilon", "sidelobe");
    sc.sidelobe.points_per_side = get_int(side, "points_per_side", "sidelobe");
    sc.sidelobe.spacing_cells = get_num_or(side, "spacing_cells", 1.0);
  }

  sc.seed = doc.at("seed").get<std::uint64_t>();

  // RCS prior: explicit variance or back-solved from a requested SNR.
  const json& rcs = doc.at("rcs");
  require_keys(rcs, "rcs", {"variance", "snr_db"});
  if (rcs.contains("variance") == rcs.contains("snr_db"))
    throw std::invalid_argument("scenario: rcs needs exactly one of 'variance' or 'snr_db'");
  if (rcs.contains("variance"))
    sc.prior.variance = rcs["variance"].get<double>();
  else
    sc.prior.variance = model::rcs_variance_for_snr(
        db_to_linear(rcs["snr_db"].get<double>()), sc.total_power, sc.geom, sc.noise_sensing);

  // SINR targets: scalar applied uniformly, or a full N x K table.
  const json& sdb = users.at("sinr_target_db");
  if (sdb.is_number()) {
    sc.sinr_target = Eigen::ArrayXXd::Constant(sc.geom.n_subcarriers, sc.users.count,
                                               db_to_linear(sdb.get<double>()));
  } else if (sdb.is_array()) {
    sc.sinr_target.resize(sc.geom.n_subcarriers, sc.users.count);
    if (static_cast<int>(sdb.size()) != sc.geom.n_subcarriers)
      throw std::invalid_argument("scenario: sinr_target_db table must have N rows");
    for (int n = 0; n < sc.geom.n_subcarriers; ++n) {
      if (static_cast<int>(sdb[n].size()) != sc.users.count)
        throw std::invalid_argument("scenario: sinr_target_db row must have K entries");
      for (int k = 0; k < sc.users.count; ++k)
        sc.sinr_target(n, k) = db_to_linear(sdb[n][k].get<double>());
    }
  } else {
    throw std::invalid_argument("scenario: sinr_target_db must be a number or a table");
  }

  rebuild_channels(sc);
  sc.validate();
  return sc;
}

Scenario load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open scenario file: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_scenario(ss.str());
}

void rebuild_channels(Scenario& sc) {
  if (sc.users.count > 0) {
    Rng rng = Rng::derive(sc.seed, 0xC4A2ULL);
    sc.channels = model::generate_user_channels(sc.geom, sc.users, rng);
    if (sc.sinr_target.rows() != sc.geom.n_subcarriers ||
        sc.sinr_target.cols() != sc.users.count) {
      const double fill = sc.sinr_target.size() > 0 ? sc.sinr_target(0, 0) : db_to_linear(10.0);
      sc.sinr_target =
          Eigen::ArrayXXd::Constant(sc.geom.n_subcarriers, sc.users.count, fill);
    }
  } else {
    sc.channels.clear();
    sc.sinr_target.resize(0, 0);
  }
}

void set_sensing_snr_db(Scenario& sc, double snr_db) {
  sc.prior.variance = model::rcs_variance_for_snr(db_to_linear(snr_db), sc.total_power, sc.geom,
                                                  sc.noise_sensing);
}

void set_uniform_sinr_target_db(Scenario& sc, double sinr_db) {
  if (sc.users.count > 0)
    sc.sinr_target = Eigen::ArrayXXd::Constant(sc.geom.n_subcarriers, sc.users.count,
                                               db_to_linear(sinr_db));
}

std::string scenario_to_json(const Scenario& sc) {
  json doc;
  doc["array"] = {{"n_tx_x", sc.geom.n_tx_x},
                  {"n_tx_y", sc.geom.n_tx_y},
                  {"n_rx_x", sc.geom.n_rx_x},
                  {"n_rx_y", sc.geom.n_rx_y},
                  {"carrier_hz", sc.geom.carrier_hz},
                  {"subcarrier_spacing_hz", sc.geom.subcarrier_spacing_hz},
                  {"n_subcarriers", sc.geom.n_subcarriers},
                  {"n_symbols", sc.geom.n_symbols},
                  {"narrowband", sc.geom.narrowband}};
  doc["target"] = {{"theta0_deg", rad_to_deg(sc.target.theta0)},
                   {"delta_theta_deg", rad_to_deg(sc.target.delta_theta)},
                   {"phi0_deg", rad_to_deg(sc.target.phi0)},
                   {"delta_phi_deg", rad_to_deg(sc.target.delta_phi)},
                   {"d0_m", sc.target.d0},
                   {"delta_d_m", sc.target.delta_d}};
  if (sc.grid_policy.explicit_sizes)
    doc["target"]["grid"] = {{"policy", "explicit"},
                             {"t_theta", sc.grid_policy.t_theta},
                             {"t_phi", sc.grid_policy.t_phi},
                             {"t_d", sc.grid_policy.t_d}};
  else
    doc["target"]["grid"] = {{"policy", "auto"}};
  doc["rcs"] = {{"variance", sc.prior.variance}};
  doc["users"] = {{"count", sc.users.count},
                  {"sinr_target_db",
                   sc.sinr_target.size() > 0 ? linear_to_db(sc.sinr_target(0, 0)) : 10.0},
                  {"distance_m", sc.users.distance_m},
                  {"path_loss_exponent", sc.users.path_loss_exponent},
                  {"rician_factor", sc.users.rician_factor},
                  {"pure_los", sc.users.pure_los},
                  {"sector",
                   {{"theta_min_deg", rad_to_deg(sc.users.sector_theta_min)},
                    {"theta_max_deg", rad_to_deg(sc.users.sector_theta_max)},
                    {"phi_min_deg", rad_to_deg(sc.users.sector_phi_min)},
                    {"phi_max_deg", rad_to_deg(sc.users.sector_phi_max)}}}};
  doc["power"] = {{"total", sc.total_power}};
  doc["noise"] = {{"comm", sc.noise_comm}, {"sensing", sc.noise_sensing}};
  doc["sidelobe"] = {{"epsilon", sc.sidelobe.epsilon},
                     {"points_per_side", sc.sidelobe.points_per_side},
                     {"spacing_cells", sc.sidelobe.spacing_cells}};
  doc["seed"] = sc.seed;
  return doc.dump(2);
}

Scenario default_desk_scenario(std::uint64_t seed) {
  Scenario sc;
  sc.geom.n_tx_x = 2;
  sc.geom.n_tx_y = 2;
  sc.geom.n_rx_x = 4;
  sc.geom.n_rx_y = 4;
  sc.geom.carrier_hz = 28e9;
  sc.geom.subcarrier_spacing_hz = 480e3;
  sc.geom.n_subcarriers = 16;
  sc.geom.n_symbols = 16;
  sc.target.theta0 = deg_to_rad(30.0);
  sc.target.delta_theta = deg_to_rad(20.0);
  sc.target.phi0 = deg_to_rad(45.0);
  sc.target.delta_phi = deg_to_rad(8.0);
  sc.target.d0 = 25.0;
  sc.target.delta_d = 10.0;
  sc.grid_policy = {true, 3, 2, 2};
  sc.users.count = 2;
  sc.total_power = 1.0;
  sc.noise_comm = 1e-9;
  sc.noise_sensing = 1.0;
  sc.sidelobe.epsilon = 1e-2;
  sc.sidelobe.points_per_side = 5;
  sc.sidelobe.spacing_cells = 1.0;
  sc.seed = seed;
  sc.prior.variance =
      model::rcs_variance_for_snr(db_to_linear(30.0), sc.total_power, sc.geom, sc.noise_sensing);
  sc.sinr_target =
      Eigen::ArrayXXd::Constant(sc.geom.n_subcarriers, sc.users.count, db_to_linear(10.0));
  rebuild_channels(sc);
  sc.validate();
  return sc;
}

Scenario default_full_scenario(std::uint64_t seed) {
  Scenario sc = default_desk_scenario(seed);
  sc.geom.n_tx_x = 4;
  sc.geom.n_tx_y = 4;
  sc.geom.n_rx_x = 36;
  sc.geom.n_rx_y = 36;
  sc.geom.n_subcarriers = 128;
  sc.geom.n_symbols = 32;
  sc.target.delta_theta = deg_to_rad(23.50);
  sc.target.delta_phi = deg_to_rad(8.71);
  sc.target.delta_d = 10.25;
  sc.grid_policy = {true, 4, 2, 3};
  sc.users.count = 6;
  sc.prior.variance =
      model::rcs_variance_for_snr(db_to_linear(30.0), sc.total_power, sc.geom, sc.noise_sensing);
  sc.sinr_target =
      Eigen::ArrayXXd::Constant(sc.geom.n_subcarriers, sc.users.count, db_to_linear(10.0));
  rebuild_channels(sc);
  sc.validate();
  return sc;
}

}  // namespace isacxt::scenario_io
