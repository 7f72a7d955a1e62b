/** Payload shapes of the REST service, mirrored field for field. */

export type Level = "address" | "entity";
export type Direction = "out" | "in";

/** Every successful response wraps its data in this envelope. */
export interface Envelope<T> {
  currency: string;
  run_id: string;
  data: T;
  next_cursor?: string;
}

/** Error responses are problem documents. */
export interface Problem {
  code: string;
  message: string;
}

export interface BlockOut {
  height: number;
  hash: string;
  timestamp: number;
  n_transactions: number;
}

export interface TxSlotOut {
  address: string;
  value: number;
  address_type: string;
}

export interface TxOut {
  tx_id: number;
  hash: string;
  height: number;
  timestamp: number;
  coinbase: boolean;
  total_input: number;
  total_output: number;
  inputs: TxSlotOut[];
  outputs: TxSlotOut[];
}

export interface AddressStats {
  address: string;
  address_id: number;
  entity_id: number;
  deposits: number;
  withdrawals: number;
  depositing_addresses: number;
  withdrawing_addresses: number;
  coins_received: number;
  coins_spent: number;
  balance: number;
  first_tx_id: number;
  first_timestamp: number;
  last_tx_id: number;
  last_timestamp: number;
  activity_period: number;
  received_usd?: string;
  spent_usd?: string;
  received_eur?: string;
  spent_eur?: string;
}

export interface EntityStats {
  entity_id: number;
  n_addresses: number;
  deposits: number;
  withdrawals: number;
  depositing_entities: number;
  withdrawing_entities: number;
  coins_received: number;
  coins_spent: number;
  balance: number;
  first_tx_id: number;
  first_timestamp: number;
  last_tx_id: number;
  last_timestamp: number;
  activity_period: number;
  tag_coherence?: number;
  received_usd?: string;
  spent_usd?: string;
  received_eur?: string;
  spent_eur?: string;
}

export interface AddressEdge {
  src: number;
  dst: number;
  src_address: string;
  dst_address: string;
  estimated_value: number;
  n_transactions: number;
  tx_list: number[];
  value_usd?: string;
  value_eur?: string;
}

export interface EntityEdge {
  src: number;
  dst: number;
  estimated_value: number;
  n_transactions: number;
  tx_list?: number[] | null;
  value_usd?: string;
  value_eur?: string;
}

export interface TagOut {
  address: string;
  address_id?: number | null;
  entity_id?: number | null;
  label: string;
  normalized_label: string;
  currency: string;
  lastmod: string;
  source?: string | null;
  category?: string | null;
  abuse?: string | null;
  unobserved: boolean;
  pack_title: string;
  pack_creator: string;
  pack_lastmod: string;
}

export interface SearchResult {
  addresses: string[];
  transactions: string[];
  labels: string[];
}

export interface KeyspaceStats {
  currency: string;
  n_blocks: number;
  n_transactions: number;
  n_addresses: number;
  n_entities: number;
  n_address_edges: number;
  n_entity_edges: number;
  n_tags: number;
  last_block_timestamp: number | null;
}
